#include "drive/expert.hpp"

#include <algorithm>
#include <cmath>

#include "drive/errors.hpp"

namespace drive {

void ExpertConfig::validate(const DynamicsConfig& dyn) const {
  if (!(lookahead > 0.0)) throw ConfigError("expert: lookahead must be positive");
  if (!(target_speed_straight > 0.0 && target_speed_straight < dyn.max_speed)) {
    throw ConfigError("expert: target speed must lie in (0, v_max)");
  }
  if (curvature_slowdown_gain < 0.0 || curvature_preview < 0.0 || !(speed_kp > 0.0)) {
    throw ConfigError("expert: gains must be non-negative");
  }
}

double expert_target_speed(const Track& track, double s, const ExpertConfig& cfg) {
  const double curvature = track.max_abs_curvature(s, cfg.curvature_preview);
  return cfg.target_speed_straight / (1.0 + cfg.curvature_slowdown_gain * curvature);
}

Action expert_action(const CarState& car, const Track& track, const ExpertConfig& cfg,
                     const DynamicsConfig& dyn) {
  const auto proj = track.project(car.position);
  if (proj.distance > 2.0 * track.half_width()) {
    throw DomainError("expert: car is too far from the centerline to recover");
  }

  const Vec2 target = track.point_at(proj.arc_length + cfg.lookahead);
  const Vec2 delta = target - car.position;
  const double alpha = std::atan2(delta.y, delta.x) - car.heading;
  const double dist = std::max(norm(delta), 1e-6);
  // Pure pursuit: curvature 2 sin(alpha) / distance, as a counter-clockwise angle.
  const double steer_ccw = std::atan(2.0 * dyn.wheelbase * std::sin(alpha) / dist);
  const double steering = -steer_ccw / dyn.max_steer;

  const double v_target = expert_target_speed(track, proj.arc_length, cfg);
  const double err = v_target - car.speed;
  const double throttle = err > 0.0 ? cfg.speed_kp * err : 0.0;
  const double brake = err < 0.0 ? -cfg.speed_kp * err : 0.0;
  return Action::clamped(throttle, brake, steering);
}

}  // namespace drive
