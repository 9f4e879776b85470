#include "drive/reward.hpp"

#include <algorithm>
#include <cmath>

#include "drive/errors.hpp"

namespace drive {

void RewardConfig::validate() const {
  if (!(d_theta > 0.0) || !(v_theta > 0.0)) {
    throw ConfigError("reward: d_theta and v_theta must be positive");
  }
  if (lambda_d < 0.0 || lambda_v < 0.0 || std::abs(lambda_d + lambda_v - 1.0) > 1e-9) {
    throw ConfigError("reward: lambda_d and lambda_v must be non-negative and sum to one");
  }
  if (cutoff < 0.0 || cutoff > 1.0) throw ConfigError("reward: cutoff must lie in [0,1]");
}

RewardBreakdown compute_reward(double distance, double speed, const RewardConfig& cfg) {
  if (!(distance >= 0.0) || !(speed >= 0.0)) {
    throw DomainError("reward: distance and speed must be non-negative");
  }
  RewardBreakdown out;
  out.r_distance = std::min(1.0, distance / cfg.d_theta);
  out.r_speed = std::min(1.0, speed / cfg.v_theta);
  if (out.r_distance < cfg.cutoff || out.r_speed < cfg.cutoff) {
    out.r = 0.0;
  } else {
    out.r = std::clamp(cfg.lambda_d * out.r_distance + cfg.lambda_v * out.r_speed, 0.0, 1.0);
  }
  return out;
}

}  // namespace drive
