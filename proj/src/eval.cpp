#include "drive/eval.hpp"

#include <cmath>

#include "drive/errors.hpp"
#include "drive/io.hpp"

namespace drive {

Policy actor_policy(const ActorNet& actor) {
  auto copy = std::make_shared<ActorNet>(actor);
  return [copy](const Observation& obs) { return actor_forward(*copy, obs); };
}

Policy random_policy(std::uint64_t seed) {
  auto rng = std::make_shared<Rng>(make_rng(seed, "random-policy"));
  return [rng](const Observation&) {
    Action a;
    a.throttle = static_cast<float>(uniform(*rng, 0.0, 1.0));
    a.brake = static_cast<float>(uniform(*rng, 0.0, 1.0));
    a.steering = static_cast<float>(uniform(*rng, -1.0, 1.0));
    return a;
  };
}

EvalReport evaluate(const Policy& policy, const DrivingEnv& env, int n_episodes, int max_steps,
                    std::uint64_t seed, const std::string& tag) {
  EpisodeConfig episode = env.episode_config();
  episode.max_steps = max_steps;
  episode.randomize_start = true;
  episode.randomize_condition = true;
  DrivingEnv local(env.track_ptr(), episode, env.reward_config(), env.dynamics(),
                   env.render_config());

  EvalReport report;
  report.policy_tag = tag;
  report.seed = seed;
  double total = 0.0;
  for (int e = 0; e < n_episodes; ++e) {
    EpisodeResult result;
    result.seed = derive_seed(seed, static_cast<std::uint64_t>(e));
    Observation obs = local.reset(result.seed);
    result.condition = local.condition();
    while (local.active()) {
      StepResult step = local.step(policy(obs));
      result.episode_return += step.info.reward.r;
      result.collided = step.info.collided;
      obs = std::move(step.obs);
    }
    result.steps = local.step_count();
    total += result.episode_return;
    report.episodes.push_back(result);
  }
  report.mean_return = n_episodes > 0 ? total / n_episodes : 0.0;
  return report;
}

Comparison compare(const std::vector<TaggedPolicy>& policies, const DrivingEnv& env,
                   int n_episodes, int max_steps, const std::vector<std::uint64_t>& seeds) {
  if (policies.size() < 2) throw ConfigError("compare: at least two policies are required");
  if (seeds.empty()) throw ConfigError("compare: the seed list is empty");

  Comparison cmp;
  cmp.seeds = seeds;
  for (const auto& p : policies) {
    ComparisonRow row;
    row.policy_tag = p.tag;
    for (std::uint64_t seed : seeds) {
      cmp.reports.push_back(evaluate(p.policy, env, n_episodes, max_steps, seed, p.tag));
      row.seed_means.push_back(cmp.reports.back().mean_return);
    }
    const double n = static_cast<double>(row.seed_means.size());
    for (double m : row.seed_means) row.mean += m / n;
    if (row.seed_means.size() > 1) {
      double ss = 0.0;
      for (double m : row.seed_means) ss += (m - row.mean) * (m - row.mean);
      row.stddev = std::sqrt(ss / (n - 1.0));
    }
    cmp.rows.push_back(std::move(row));
  }
  return cmp;
}

void write_eval_csv(const std::vector<EvalReport>& reports, const std::filesystem::path& path) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : reports) {
    for (std::size_t e = 0; e < r.episodes.size(); ++e) {
      const auto& ep = r.episodes[e];
      rows.push_back({r.policy_tag, std::to_string(r.seed), std::to_string(e),
                      to_string(ep.condition.preset), std::to_string(ep.steps),
                      csv_number(ep.episode_return)});
    }
  }
  write_csv(path, {"policy_tag", "seed", "episode", "condition", "steps", "return"}, rows);
}

void write_comparison_csv(const Comparison& cmp, const std::filesystem::path& path) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : cmp.rows) {
    rows.push_back({r.policy_tag, std::to_string(r.seed_means.size()), csv_number(r.mean),
                    csv_number(r.stddev)});
  }
  write_csv(path, {"policy_tag", "n_seeds", "mean_return", "std_return"}, rows);
}

}  // namespace drive
