#pragma once

#include "drive/env.hpp"
#include "drive/track.hpp"
#include "drive/types.hpp"

namespace drive {

/// Scripted demonstrator: pure-pursuit steering plus proportional speed control.
struct ExpertConfig {
  double lookahead = 6.0;               // m
  double target_speed_straight = 18.0;  // m/s
  double curvature_slowdown_gain = 40.0;  // m; target /= 1 + gain * |curvature|
  double curvature_preview = 15.0;      // m of track scanned for the local curvature
  double speed_kp = 0.5;

  void validate(const DynamicsConfig& dyn = {}) const;
};

/// Throws DomainError when the car is more than two half-widths off the
/// centerline.
Action expert_action(const CarState& car, const Track& track, const ExpertConfig& cfg = {},
                     const DynamicsConfig& dyn = {});

/// Target speed the expert tracks at arc length s.
double expert_target_speed(const Track& track, double s, const ExpertConfig& cfg);

}  // namespace drive
