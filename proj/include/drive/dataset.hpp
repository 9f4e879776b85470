#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "drive/env.hpp"
#include "drive/expert.hpp"
#include "drive/types.hpp"

namespace drive {

enum class DemoSource { expert, teleop, augmented };

std::string to_string(DemoSource source);

struct DemoSample {
  Observation obs;
  Action action;
  int episode = 0;
  // Unknown for samples reloaded from a demo log.
  std::optional<ConditionPreset> preset;
  DemoSource source = DemoSource::expert;

  friend bool operator==(const DemoSample&, const DemoSample&) = default;
};

struct DemoSet {
  std::vector<DemoSample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  /// Distinct episode ids in ascending order.
  std::vector<int> episode_ids() const;
};

/// Chooses the action to record for the current observation. The environment
/// is passed so privileged demonstrators can read the true car state.
using ActionSource = std::function<Action(const DrivingEnv&, const Observation&)>;

ActionSource expert_source(const ExpertConfig& cfg = {});

/// Runs `episodes` episodes, cycling the condition preset round-robin over
/// the four presets, and records (obs, action) at every step. Episode i is
/// reset with derive_seed(seed, i). When `transitions` is non-null the full
/// transitions are appended to it as well.
DemoSet collect_demos(const ActionSource& policy, DrivingEnv& env, int episodes,
                      std::uint64_t seed, DemoSource source = DemoSource::expert,
                      std::vector<Transition>* transitions = nullptr);

/// Rebuilds a demo set from logged transitions; a done flag closes an episode.
DemoSet demos_from_transitions(std::span<const Transition> transitions,
                               DemoSource source = DemoSource::expert);

/// Originals followed by one copy of each with speed ~ U[0,3] m/s, throttle 1
/// and brake 0.
DemoSet augment_low_speed(const DemoSet& demos, std::uint64_t seed);

inline constexpr double kAugmentMaxSpeed = 3.0;

/// Splits whole episodes into (train, test). The test side receives
/// round(test_fraction * episodes) episodes, at least one and at most all but one.
std::pair<DemoSet, DemoSet> split_demos(const DemoSet& demos, double test_fraction,
                                        std::uint64_t seed);

}  // namespace drive
