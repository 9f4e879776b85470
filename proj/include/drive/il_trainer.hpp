#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "drive/dataset.hpp"
#include "drive/policy.hpp"
#include "drive/train_ops.hpp"

namespace drive {

struct ILConfig {
  int epochs = 30;
  int batch_size = 64;
  double lr = 1e-3;
  nn::HuberConfig huber;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ILEpochStats {
  int epoch = 0;
  double train_loss = 0.0;  // mean over the epoch's batches, before each step
  double test_loss = 0.0;   // after the epoch; NaN when the test set is empty
};

struct ILResult {
  Checkpoint checkpoint;
  std::vector<ILEpochStats> history;
};

/// Behavioral cloning: Adam on the mean Huber loss between the actor's
/// squashed outputs and the demonstrated actions. Throws DataError on an empty
/// training set and NumericError (naming the epoch) on a non-finite loss.
ILResult train_il(const DemoSet& train, const DemoSet& test, const NetConfig& net,
                  const ILConfig& cfg, double speed_scale = 20.0,
                  const std::string& config_digest = "");

/// Mean Huber loss of `actor` over every sample and action dimension.
double demo_loss(ActorNet& actor, const DemoSet& demos, const nn::HuberConfig& huber);

/// Throws DataError on an empty set.
double eval_test_loss(const Checkpoint& ckpt, const DemoSet& test, const nn::HuberConfig& huber,
                      const NetConfig& net, double speed_scale = 20.0);

void write_il_history_csv(const std::vector<ILEpochStats>& history,
                          const std::filesystem::path& path);

}  // namespace drive
