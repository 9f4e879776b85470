#include "drive/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "drive/errors.hpp"

namespace drive {

std::string to_string(DemoSource source) {
  switch (source) {
    case DemoSource::expert: return "expert";
    case DemoSource::teleop: return "teleop";
    case DemoSource::augmented: return "augmented";
  }
  return "unknown";
}

std::vector<int> DemoSet::episode_ids() const {
  std::set<int> ids;
  for (const auto& s : samples) ids.insert(s.episode);
  return {ids.begin(), ids.end()};
}

ActionSource expert_source(const ExpertConfig& cfg) {
  return [cfg](const DrivingEnv& env, const Observation&) {
    return expert_action(env.car(), env.track(), cfg, env.dynamics());
  };
}

DemoSet collect_demos(const ActionSource& policy, DrivingEnv& env, int episodes,
                      std::uint64_t seed, DemoSource source,
                      std::vector<Transition>* transitions) {
  DemoSet out;
  for (int e = 0; e < episodes; ++e) {
    const ConditionPreset preset = kAllPresets[static_cast<std::size_t>(e) % kAllPresets.size()];
    Observation obs = env.reset(derive_seed(seed, static_cast<std::uint64_t>(e)), preset);
    while (env.active()) {
      const Action action = policy(env, obs);
      StepResult step = env.step(action);
      if (transitions != nullptr) {
        transitions->push_back({obs, action, static_cast<float>(step.info.reward.r), step.obs,
                                step.done});
      }
      out.samples.push_back({std::move(obs), action, e, preset, source});
      obs = std::move(step.obs);
    }
  }
  return out;
}

DemoSet demos_from_transitions(std::span<const Transition> transitions, DemoSource source) {
  DemoSet out;
  int episode = 0;
  for (const auto& t : transitions) {
    out.samples.push_back({t.obs, t.action, episode, std::nullopt, source});
    if (t.done) ++episode;
  }
  return out;
}

DemoSet augment_low_speed(const DemoSet& demos, std::uint64_t seed) {
  Rng rng = make_rng(seed, "augment");
  DemoSet out;
  out.samples = demos.samples;
  out.samples.reserve(2 * demos.size());
  for (const auto& s : demos.samples) {
    DemoSample copy = s;
    copy.obs.speed = std::min(static_cast<float>(uniform(rng, 0.0, kAugmentMaxSpeed)),
                              static_cast<float>(kAugmentMaxSpeed));
    copy.action.throttle = 1.0f;
    copy.action.brake = 0.0f;
    copy.source = DemoSource::augmented;
    out.samples.push_back(std::move(copy));
  }
  return out;
}

std::pair<DemoSet, DemoSet> split_demos(const DemoSet& demos, double test_fraction,
                                        std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw SplitError("split: test_fraction must lie strictly between 0 and 1");
  }
  std::vector<int> ids = demos.episode_ids();
  if (ids.size() < 2) throw SplitError("split: at least two episodes are required");

  Rng rng = make_rng(seed, "split");
  for (std::size_t i = ids.size(); i > 1; --i) {
    std::swap(ids[i - 1], ids[uniform_index(rng, i)]);
  }
  const auto n = static_cast<long>(ids.size());
  const long n_test = std::clamp(std::lround(test_fraction * static_cast<double>(n)), 1L, n - 1);
  const std::set<int> test_ids(ids.begin(), ids.begin() + n_test);

  std::pair<DemoSet, DemoSet> out;
  for (const auto& s : demos.samples) {
    (test_ids.contains(s.episode) ? out.second : out.first).samples.push_back(s);
  }
  return out;
}

}  // namespace drive
