#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "drive/env.hpp"
#include "drive/policy.hpp"

namespace drive {

/// Maps an observation to an action. Evaluation only calls it; it never sees
/// the environment.
using Policy = std::function<Action(const Observation&)>;

/// Deterministic policy backed by a private copy of `actor`.
Policy actor_policy(const ActorNet& actor);
/// Independent uniform actions over the full action box, reproducible from `seed`.
/// Each copy of the returned policy shares one generator.
Policy random_policy(std::uint64_t seed);

struct EpisodeResult {
  std::uint64_t seed = 0;  // the episode's own reset seed
  Condition condition;
  int steps = 0;
  double episode_return = 0.0;  // undiscounted sum of per-step rewards
  bool collided = false;
};

struct EvalReport {
  std::string policy_tag;
  std::uint64_t seed = 0;
  std::vector<EpisodeResult> episodes;
  double mean_return = 0.0;
};

/// Runs `n_episodes` episodes capped at `max_steps`, each with start pose and
/// condition randomized from derive_seed(seed, episode index). The track,
/// reward, dynamics and render settings come from `env`.
EvalReport evaluate(const Policy& policy, const DrivingEnv& env, int n_episodes, int max_steps,
                    std::uint64_t seed, const std::string& tag = "");

struct TaggedPolicy {
  std::string tag;
  Policy policy;
};

struct ComparisonRow {
  std::string policy_tag;
  std::vector<double> seed_means;  // mean_return per seed, in seed order
  double mean = 0.0;
  double stddev = 0.0;             // sample standard deviation; 0 for one seed
};

struct Comparison {
  std::vector<std::uint64_t> seeds;
  std::vector<ComparisonRow> rows;
  std::vector<EvalReport> reports;  // policy-major, then seed order
};

/// Every policy is evaluated on the same seeds. Throws ConfigError with fewer
/// than two policies or no seeds.
Comparison compare(const std::vector<TaggedPolicy>& policies, const DrivingEnv& env,
                   int n_episodes, int max_steps, const std::vector<std::uint64_t>& seeds);

/// Columns: policy_tag, seed, episode, condition, steps, return.
void write_eval_csv(const std::vector<EvalReport>& reports, const std::filesystem::path& path);
/// Columns: policy_tag, n_seeds, mean_return, std_return.
void write_comparison_csv(const Comparison& cmp, const std::filesystem::path& path);

}  // namespace drive
