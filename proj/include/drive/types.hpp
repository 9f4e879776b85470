#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace drive {

inline constexpr int kDefaultImageSize = 48;

/// Policy state: a grayscale top-down raster plus the vehicle speed in m/s.
struct Observation {
  int height = kDefaultImageSize;
  int width = kDefaultImageSize;
  std::vector<float> image;  // row-major, height * width values in [0, 1]
  float speed = 0.0F;

  /// Throws ValidationError when a value is non-finite or out of range.
  void validate() const;

  friend bool operator==(const Observation&, const Observation&) = default;
};

/// Throttle and brake in [0, 1], steering in [-1, 1] (positive steers right).
struct Action {
  float throttle = 0.0F;
  float brake = 0.0F;
  float steering = 0.0F;

  void validate() const;
  static Action clamped(double throttle, double brake, double steering);

  friend bool operator==(const Action&, const Action&) = default;
};

struct Transition {
  Observation obs;
  Action action;
  float reward = 0.0F;
  Observation next_obs;
  bool done = false;

  void validate() const;

  friend bool operator==(const Transition&, const Transition&) = default;
};

struct RewardBreakdown {
  double r_distance = 0.0;
  double r_speed = 0.0;
  double r = 0.0;
};

struct StepInfo {
  double distance_to_obstacle = 0.0;  // d, meters
  double speed = 0.0;                 // v, m/s
  bool collided = false;
  RewardBreakdown reward;
};

struct CheckpointEntry {
  std::string name;
  std::vector<int> shape;
  bool frozen = false;
  std::vector<float> values;

  friend bool operator==(const CheckpointEntry&, const CheckpointEntry&) = default;
};

struct CheckpointMeta {
  std::string phase;  // "il" or "rl"
  std::uint64_t seed = 0;
  std::string created_at;
  std::string config_digest;

  friend bool operator==(const CheckpointMeta&, const CheckpointMeta&) = default;
};

/// Named parameter tensors; the unit of weight transfer between training phases.
struct Checkpoint {
  std::vector<CheckpointEntry> entries;
  CheckpointMeta meta;

  const CheckpointEntry* find(const std::string& name) const;
  void validate() const;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// Deterministic creation stamp: SOURCE_DATE_EPOCH when set, else the Unix epoch.
std::string reproducible_timestamp();

}  // namespace drive
