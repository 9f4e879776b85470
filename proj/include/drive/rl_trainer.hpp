#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "drive/env.hpp"
#include "drive/policy.hpp"
#include "drive/train_ops.hpp"

namespace drive {

struct RLConfig {
  double gamma = 0.99;
  double tau = 0.005;
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  int batch_size = 64;
  int replay_capacity = 50000;
  int prefill_size = 20000;
  int pretrain_max_updates = 10000;
  int convergence_window = 200;
  double convergence_rel_tol = 0.01;
  int total_env_steps = 5000;
  int updates_per_step = 1;
  int eval_interval = 5000;
  int eval_episodes = 5;
  bool baseline = false;
  double exploration_sigma = 0.1;  // baseline only
  bool squared_critic_loss = false;
  nn::HuberConfig huber;
  std::uint64_t seed = 0;

  void validate() const;
};

/// One replay slot. Observations are shared so consecutive transitions store
/// each frame once. `features` / `next_features` hold the pooled backbone
/// output when the backbone is frozen, and are empty otherwise.
struct ReplayItem {
  std::shared_ptr<const Observation> obs;
  Action action;
  float reward = 0.0f;
  std::shared_ptr<const Observation> next_obs;
  bool done = false;
  std::vector<float> features;
  std::vector<float> next_features;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  /// Overwrites the oldest slot once full.
  void push(ReplayItem item);
  void push(const Transition& t);

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t insertions() const { return insertions_; }
  /// Index 0 is the oldest stored item.
  const ReplayItem& at(std::size_t i) const;

  /// `n` indices drawn uniformly with replacement.
  std::vector<std::size_t> sample_indices(Rng& rng, std::size_t n) const;

 private:
  std::size_t capacity_;
  std::size_t insertions_ = 0;
  std::vector<ReplayItem> items_;
};

/// Online and target networks plus their optimizers.
struct DdpgAgent {
  ActorNet actor;
  CriticNet critic;
  ActorNet target_actor;
  CriticNet target_critic;
  nn::Optimizer actor_opt;
  nn::Optimizer critic_opt;

  /// Targets start as copies of the online networks.
  DdpgAgent(ActorNet actor, CriticNet critic);

  /// True when every backbone parameter of all four networks is frozen, so
  /// their pooled features coincide and can be cached.
  bool backbone_frozen() const;
};

struct UpdateLosses {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
};

/// One DDPG step on the given slots: critic regression toward
/// r + gamma (1 - done) Q'(s', mu'(s')), actor ascent on Q(s, mu(s)) through
/// the updated critic, then soft updates of both targets. Uses cached
/// features when every slot has them. Throws NumericError naming the loss.
UpdateLosses ddpg_update(DdpgAgent& agent, const std::vector<const ReplayItem*>& batch,
                         const RLConfig& cfg);

/// target <- tau * online + (1 - tau) * target, computed in double and rounded
/// once. Parameters frozen in both networks are skipped. Throws ShapeError on
/// any name or shape mismatch.
void soft_update(TwoStageNet& target, const TwoStageNet& online, double tau);

/// The behavior policy of the non-baseline trainer: exactly actor_forward.
Action act_no_noise(ActorNet& actor, const Observation& obs);

/// Fills the buffer with IL-policy rollouts (no noise) until it holds
/// cfg.prefill_size items. Stores cached features when the backbone is frozen.
void prefill_replay(ActorNet& il_policy, DrivingEnv& env, ReplayBuffer& buffer,
                    const RLConfig& cfg, bool cache_features);

/// Updates on uniform batches until both losses' windowed relative change is
/// below cfg.convergence_rel_tol, or cfg.pretrain_max_updates is reached.
/// Returns the number of updates.
int pretrain_on_buffer(DdpgAgent& agent, const ReplayBuffer& buffer, const RLConfig& cfg,
                       Rng& sample_rng,
                       const std::function<void(std::size_t)>& on_update = {});

struct RLHistoryRow {
  int env_step = 0;
  double critic_loss = 0.0;  // mean over updates since the previous row; NaN if none
  double actor_loss = 0.0;
  double eval_return = 0.0;
};

struct RLResult {
  Checkpoint checkpoint;  // best-evaluated actor plus "critic/" entries
  std::vector<RLHistoryRow> history;
  int pretrain_updates = 0;
  int best_env_step = 0;
};

/// Observation points for tests; all optional.
struct RLHooks {
  std::function<void(const Observation&, const Action&, ActorNet&)> on_env_action;
  std::function<void(std::size_t buffer_size)> on_update;  // before every gradient step
  std::function<void(const DdpgAgent&)> on_pretrained;
};

/// Runs the full pipeline. Non-baseline: transfer from `il_ckpt`, prefill,
/// pretrain, then the noise-free main loop. Baseline: random initialization,
/// no freezing or prefill, Gaussian exploration noise; `il_ckpt` is unused.
/// The policy is evaluated at step 0, every eval_interval steps and at the
/// end; the best evaluation wins, earliest on ties.
RLResult train_rl(const Checkpoint* il_ckpt, const DrivingEnv& env, const NetConfig& net,
                  const RLConfig& cfg, const std::string& config_digest = "",
                  const RLHooks& hooks = {});

Checkpoint rl_checkpoint(const ActorNet& actor, const CriticNet& critic, CheckpointMeta meta);

void write_rl_history_csv(const std::vector<RLHistoryRow>& history,
                          const std::filesystem::path& path);

}  // namespace drive
