#pragma once

#include "drive/types.hpp"

namespace drive {

struct RewardConfig {
  double d_theta = 3.5;   // meters
  double v_theta = 20.0;  // m/s
  double lambda_d = 0.5;
  double lambda_v = 0.5;
  double cutoff = 0.1;

  void validate() const;
};

/// Distance/speed reward in [0, 1]. Each component saturates at 1 once its
/// threshold is reached, and the reward is zero when either normalized
/// component falls below the cutoff. Throws DomainError on negative inputs.
RewardBreakdown compute_reward(double distance, double speed, const RewardConfig& cfg = {});

}  // namespace drive
