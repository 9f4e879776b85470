#include <gtest/gtest.h>

#include <random>

#include "drive/errors.hpp"
#include "drive/reward.hpp"

using namespace drive;

namespace {

struct Row {
  double d, v;
  double r_distance, r_speed, r;
};

// Values evaluated by hand with d_theta 3.5, v_theta 20, weights 0.5, cutoff 0.1.
const Row kTable[] = {
    {3.5, 20.0, 1.0, 1.0, 1.0},      // both exactly saturated
    {1.75, 10.0, 0.5, 0.5, 0.5},     // interior
    {0.3, 20.0, 0.3 / 3.5, 1.0, 0},  // distance below the cutoff
    {7.0, 40.0, 1.0, 1.0, 1.0},      // both clamp
    {3.5, 1.0, 1.0, 0.05, 0.0},      // speed below the cutoff
    {0.7, 2.0, 0.2, 0.1, 0.15},      // speed exactly at the cutoff
    {0.0, 20.0, 0.0, 1.0, 0.0},
    {3.5, 0.0, 1.0, 0.0, 0.0},
    {10.0, 10.0, 1.0, 0.5, 0.75},    // distance saturated only
    {1.75, 50.0, 0.5, 1.0, 0.75},    // speed saturated only
    {2.8, 16.0, 0.8, 0.8, 0.8},
    {0.34, 30.0, 0.34 / 3.5, 1.0, 0.0},
    {1.0, 1.9, 1.0 / 3.5, 0.095, 0.0},
};

}  // namespace

TEST(Reward, HandEvaluatedTable) {
  for (const Row& row : kTable) {
    const RewardBreakdown b = compute_reward(row.d, row.v);
    EXPECT_NEAR(b.r_distance, row.r_distance, 1e-12) << row.d << "," << row.v;
    EXPECT_NEAR(b.r_speed, row.r_speed, 1e-12) << row.d << "," << row.v;
    EXPECT_NEAR(b.r, row.r, 1e-12) << row.d << "," << row.v;
  }
}

TEST(Reward, BoundedAndMonotoneUnderRandomInputs) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> ud(0.0, 10.0), uv(0.0, 45.0), step(0.0, 1.0);
  for (int i = 0; i < 100000; ++i) {
    const double d = ud(rng), v = uv(rng);
    const RewardBreakdown b = compute_reward(d, v);
    ASSERT_GE(b.r, 0.0);
    ASSERT_LE(b.r, 1.0);
    ASSERT_LE(b.r, compute_reward(d + step(rng), v).r);
    ASSERT_LE(b.r, compute_reward(d, v + step(rng)).r);
    const bool below = d / 3.5 < 0.1 || v / 20.0 < 0.1;
    ASSERT_EQ(b.r == 0.0, below) << d << "," << v;
  }
}

TEST(Reward, NegativeInputsAreDomainErrors) {
  EXPECT_THROW(compute_reward(-0.1, 5.0), DomainError);
  EXPECT_THROW(compute_reward(1.0, -1e-9), DomainError);
}

TEST(Reward, ConfigValidation) {
  RewardConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.lambda_d = 0.7;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.d_theta = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}
