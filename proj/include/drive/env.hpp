#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "drive/reward.hpp"
#include "drive/rng.hpp"
#include "drive/track.hpp"
#include "drive/types.hpp"

namespace drive {

struct CarState {
  Vec2 position;
  double heading = 0.0;  // radians, counter-clockwise from +x
  double speed = 0.0;    // m/s, never negative
};

/// Kinematic bicycle constants.
struct DynamicsConfig {
  double wheelbase = 2.5;       // L, m
  double max_steer = 0.5;       // steering angle at |steering| = 1, rad
  double throttle_accel = 4.0;  // m/s^2 at full throttle
  double brake_decel = 8.0;     // m/s^2 at full brake
  double drag = 0.1;            // 1/s
  double max_speed = 30.0;      // m/s
};

/// One Euler step. Positive steering turns right (clockwise).
CarState step_dynamics(const CarState& car, const Action& action, double dt,
                       const DynamicsConfig& dyn = {});

enum class ConditionPreset { clear = 0, rain = 1, fog = 2, dusk = 3 };
inline constexpr std::array<ConditionPreset, 4> kAllPresets = {
    ConditionPreset::clear, ConditionPreset::rain, ConditionPreset::fog, ConditionPreset::dusk};

std::string to_string(ConditionPreset preset);
ConditionPreset preset_from_string(const std::string& name);

struct Condition {
  ConditionPreset preset = ConditionPreset::clear;
  double brightness_scale = 1.0;  // [0.4, 1.2]
  double noise_sigma = 0.0;       // [0, 0.1]
  int blur_radius = 0;            // {0, 1, 2}

  void validate() const;
};

Condition sample_condition(Rng& rng);
Condition sample_condition(Rng& rng, ConditionPreset preset);

/// Raster geometry: a car-centred, heading-aligned square window.
struct RenderConfig {
  int image_hw = kDefaultImageSize;
  double window_m = 24.0;
  double road_value = 0.6;
  double offroad_value = 0.1;
  double obstacle_value = 0.9;
  double car_value = 1.0;
  double car_length = 4.0;
  double car_width = 2.0;
};

/// Rasterizes the scene and applies the condition's brightness, additive
/// Gaussian noise (from `noise_rng`) and box blur. The car faces up.
std::vector<float> render_observation(const Track& track, const CarState& car,
                                      const Condition& condition, Rng& noise_rng,
                                      const RenderConfig& render = {});
/// The noiseless raster before any condition is applied.
std::vector<float> render_clean(const Track& track, const CarState& car,
                                const RenderConfig& render = {});

struct EpisodeConfig {
  int max_steps = 1000;
  double dt = 0.05;
  bool randomize_start = true;
  bool randomize_condition = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct StepResult {
  Observation obs;
  StepInfo info;
  bool done = false;
};

/// The driving world: dynamics, clearance sensing, rendering and the episode
/// protocol (termination on collision or after max_steps).
class DrivingEnv {
 public:
  DrivingEnv(std::shared_ptr<const Track> track, EpisodeConfig episode = {},
             RewardConfig reward = {}, DynamicsConfig dynamics = {}, RenderConfig render = {});

  /// Starts an episode. `preset` forces the condition preset when given.
  Observation reset(std::uint64_t seed, std::optional<ConditionPreset> preset = std::nullopt);
  /// Throws StateError if the episode is over or was never started.
  StepResult step(const Action& action);

  Observation observe();

  const Track& track() const { return *track_; }
  std::shared_ptr<const Track> track_ptr() const { return track_; }
  const CarState& car() const { return car_; }
  const Condition& condition() const { return condition_; }
  const EpisodeConfig& episode_config() const { return episode_; }
  const RewardConfig& reward_config() const { return reward_; }
  const DynamicsConfig& dynamics() const { return dynamics_; }
  const RenderConfig& render_config() const { return render_; }
  int step_count() const { return steps_; }
  bool done() const { return done_; }
  bool active() const { return started_ && !done_; }

  /// Places the car directly (tests and teleop).
  void set_car(const CarState& car) { car_ = car; }
  void set_condition(const Condition& condition) { condition_ = condition; }

 private:
  std::shared_ptr<const Track> track_;
  EpisodeConfig episode_;
  RewardConfig reward_;
  DynamicsConfig dynamics_;
  RenderConfig render_;
  CarState car_;
  Condition condition_;
  Rng render_rng_;
  int steps_ = 0;
  bool done_ = false;
  bool started_ = false;
};

}  // namespace drive
