#include "drive/rl_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "drive/errors.hpp"
#include "drive/eval.hpp"
#include "drive/io.hpp"

namespace drive {

void RLConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("rl: gamma must lie in (0, 1)");
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("rl: tau must lie in (0, 1]");
  if (!(actor_lr >= 0.0 && critic_lr >= 0.0)) throw ConfigError("rl: learning rates must be >= 0");
  if (batch_size < 1) throw ConfigError("rl: batch_size must be >= 1");
  if (replay_capacity < 1) throw ConfigError("rl: replay_capacity must be >= 1");
  if (prefill_size < 0 || prefill_size > replay_capacity) {
    throw ConfigError("rl: prefill_size must lie in [0, replay_capacity]");
  }
  if (pretrain_max_updates < 0) throw ConfigError("rl: pretrain_max_updates must be >= 0");
  if (convergence_window < 1) throw ConfigError("rl: convergence_window must be >= 1");
  if (!(convergence_rel_tol >= 0.0)) throw ConfigError("rl: convergence_rel_tol must be >= 0");
  if (total_env_steps < 0) throw ConfigError("rl: total_env_steps must be >= 0");
  if (updates_per_step < 0) throw ConfigError("rl: updates_per_step must be >= 0");
  if (eval_interval < 1) throw ConfigError("rl: eval_interval must be >= 1");
  if (eval_episodes < 1) throw ConfigError("rl: eval_episodes must be >= 1");
  if (!(exploration_sigma >= 0.0)) throw ConfigError("rl: exploration_sigma must be >= 0");
  huber.validate();
}

// ---------------------------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay: capacity must be positive");
  items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(ReplayItem item) {
  if (!item.obs || !item.next_obs) throw ValidationError("replay: item without observations");
  if (items_.size() < capacity_) {
    items_.push_back(std::move(item));
  } else {
    items_[insertions_ % capacity_] = std::move(item);
  }
  ++insertions_;
}

void ReplayBuffer::push(const Transition& t) {
  t.validate();
  ReplayItem item;
  item.obs = std::make_shared<const Observation>(t.obs);
  item.action = t.action;
  item.reward = t.reward;
  item.next_obs = std::make_shared<const Observation>(t.next_obs);
  item.done = t.done;
  push(std::move(item));
}

const ReplayItem& ReplayBuffer::at(std::size_t i) const {
  if (i >= items_.size()) throw ShapeError("replay: index out of range");
  if (items_.size() < capacity_) return items_[i];
  return items_[(insertions_ + i) % capacity_];
}

std::vector<std::size_t> ReplayBuffer::sample_indices(Rng& rng, std::size_t n) const {
  if (items_.empty()) throw StateError("replay: cannot sample from an empty buffer");
  std::vector<std::size_t> out(n);
  for (auto& i : out) i = uniform_index(rng, items_.size());
  return out;
}

// ---------------------------------------------------------------------------

DdpgAgent::DdpgAgent(ActorNet a, CriticNet c)
    : actor(std::move(a)),
      critic(std::move(c)),
      target_actor(actor),
      target_critic(critic),
      actor_opt(nn::Optimizer::Mode::adam),
      critic_opt(nn::Optimizer::Mode::adam) {}

bool DdpgAgent::backbone_frozen() const {
  const TwoStageNet* nets[] = {&actor, &critic, &target_actor, &target_critic};
  const auto reference = actor.backbone.parameters();
  for (const auto* net : nets) {
    const auto params = net->backbone.parameters();
    if (params.size() != reference.size()) return false;
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!params[i]->frozen || params[i]->value.values != reference[i]->value.values) {
        return false;
      }
    }
  }
  return true;
}

namespace {

bool backbone_trainable(const TwoStageNet& net) {
  for (const auto* p : net.backbone.parameters()) {
    if (!p->frozen) return true;
  }
  return false;
}

nn::Tensor stack_features(const std::vector<const ReplayItem*>& batch, bool next, int dim) {
  nn::Tensor t({static_cast<int>(batch.size()), dim});
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& f = next ? batch[i]->next_features : batch[i]->features;
    std::copy(f.begin(), f.end(), t.data() + i * static_cast<std::size_t>(dim));
  }
  return t;
}

void require_finite(double loss, const char* which) {
  if (!std::isfinite(loss)) {
    throw NumericError(std::string("ddpg: non-finite ") + which + " loss");
  }
}

}  // namespace

UpdateLosses ddpg_update(DdpgAgent& agent, const std::vector<const ReplayItem*>& batch,
                         const RLConfig& cfg) {
  if (batch.empty()) throw ShapeError("ddpg: empty batch");
  const int n = static_cast<int>(batch.size());
  const int dim = agent.actor.cfg.feature_dim;
  bool cached = true;
  for (const auto* item : batch) {
    cached = cached && static_cast<int>(item->features.size()) == dim &&
             static_cast<int>(item->next_features.size()) == dim;
  }

  std::vector<const Observation*> obs, next_obs;
  std::vector<const Action*> actions;
  for (const auto* item : batch) {
    obs.push_back(item->obs.get());
    next_obs.push_back(item->next_obs.get());
    actions.push_back(&item->action);
  }
  const double scale = agent.actor.speed_scale;
  const nn::Tensor speeds = speed_batch(obs, scale);
  const nn::Tensor next_speeds = speed_batch(next_obs, scale);
  const nn::Tensor taken = action_batch(actions);

  nn::Tensor images, next_images, f, f_next;
  if (cached) {
    f = stack_features(batch, false, dim);
    f_next = stack_features(batch, true, dim);
  } else {
    images = image_batch(obs);
    next_images = image_batch(next_obs);
  }

  // TD targets from the target networks, held constant below.
  const nn::Tensor next_mu = actor_head_forward(
      agent.target_actor, cached ? f_next : agent.target_actor.features(next_images), next_speeds);
  const nn::Tensor next_q =
      critic_head_forward(agent.target_critic,
                          cached ? f_next : agent.target_critic.features(next_images),
                          next_speeds, next_mu);
  nn::Tensor y({n, 1});
  for (int i = 0; i < n; ++i) {
    const double not_done = batch[i]->done ? 0.0 : 1.0;
    y[i] = static_cast<float>(static_cast<double>(batch[i]->reward) +
                              cfg.gamma * not_done * static_cast<double>(next_q[i]));
  }

  UpdateLosses out;

  // Critic step.
  const bool critic_deep = !cached && backbone_trainable(agent.critic);
  const nn::Tensor q = critic_head_forward(
      agent.critic, cached ? f : agent.critic.features(images), speeds, taken);
  const auto critic_loss =
      cfg.squared_critic_loss ? nn::squared_loss(q, y) : nn::huber_loss(q, y, cfg.huber);
  require_finite(critic_loss.loss, "critic");
  out.critic_loss = critic_loss.loss;
  agent.critic.head.backward_in_place(critic_loss.grad, critic_deep);
  if (critic_deep) {
    agent.critic.backbone.backward_in_place(agent.critic.head.input_gradients().at("features"),
                                            false);
  }
  agent.critic_opt.step(agent.critic.parameters(), cfg.critic_lr);

  // Actor step through the updated critic; only the actor's parameters move.
  const bool actor_deep = !cached && backbone_trainable(agent.actor);
  const nn::Tensor mu =
      actor_head_forward(agent.actor, cached ? f : agent.actor.features(images), speeds);
  const nn::Tensor q_mu = critic_head_forward(
      agent.critic, cached ? f : agent.critic.features(images), speeds, mu);
  double mean_q = 0.0;
  for (int i = 0; i < n; ++i) mean_q += static_cast<double>(q_mu[i]);
  out.actor_loss = -mean_q / n;
  require_finite(out.actor_loss, "actor");
  const nn::Tensor dq({n, 1}, static_cast<float>(-1.0 / n));
  agent.critic.head.backward_in_place(dq, false);
  agent.actor.head.backward_in_place(agent.critic.head.input_gradients().at("action"),
                                     actor_deep);
  if (actor_deep) {
    agent.actor.backbone.backward_in_place(agent.actor.head.input_gradients().at("features"),
                                           false);
  }
  agent.actor_opt.step(agent.actor.parameters(), cfg.actor_lr);

  soft_update(agent.target_actor, agent.actor, cfg.tau);
  soft_update(agent.target_critic, agent.critic, cfg.tau);
  return out;
}

void soft_update(TwoStageNet& target, const TwoStageNet& online, double tau) {
  auto dst = target.parameters();
  const auto src = online.parameters();
  if (dst.size() != src.size()) throw ShapeError("soft_update: parameter lists differ");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i]->name != src[i]->name || dst[i]->value.shape != src[i]->value.shape) {
      throw ShapeError("soft_update: mismatch at " + dst[i]->name);
    }
  }
  const double keep = 1.0 - tau;
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i]->frozen && src[i]->frozen) continue;
    auto& t = dst[i]->value.values;
    const auto& o = src[i]->value.values;
    for (std::size_t k = 0; k < t.size(); ++k) {
      t[k] = static_cast<float>(tau * static_cast<double>(o[k]) +
                                keep * static_cast<double>(t[k]));
    }
  }
}

Action act_no_noise(ActorNet& actor, const Observation& obs) { return actor_forward(actor, obs); }

void prefill_replay(ActorNet& il_policy, DrivingEnv& env, ReplayBuffer& buffer,
                    const RLConfig& cfg, bool cache_features) {
  const auto target = static_cast<std::size_t>(cfg.prefill_size);
  std::uint64_t episode = 0;
  while (buffer.size() < target) {
    auto obs = std::make_shared<const Observation>(
        env.reset(derive_seed(derive_seed(cfg.seed, "prefill"), episode++)));
    nn::Tensor f = observation_features(il_policy, *obs);
    while (env.active() && buffer.size() < target) {
      const Action a = actor_forward_from_features(il_policy, f, *obs);
      StepResult step = env.step(a);
      auto next = std::make_shared<const Observation>(std::move(step.obs));
      nn::Tensor nf = observation_features(il_policy, *next);
      ReplayItem item{obs, a, static_cast<float>(step.info.reward.r), next, step.done, {}, {}};
      if (cache_features) {
        item.features = f.values;
        item.next_features = nf.values;
      }
      buffer.push(std::move(item));
      obs = std::move(next);
      f = std::move(nf);
    }
  }
}

namespace {

std::vector<const ReplayItem*> draw_batch(const ReplayBuffer& buffer, Rng& rng, int n) {
  std::vector<const ReplayItem*> batch;
  for (std::size_t i : buffer.sample_indices(rng, static_cast<std::size_t>(n))) {
    batch.push_back(&buffer.at(i));
  }
  return batch;
}

double window_mean(const std::vector<double>& v, std::size_t begin, std::size_t count) {
  double s = 0.0;
  for (std::size_t i = begin; i < begin + count; ++i) s += v[i];
  return s / static_cast<double>(count);
}

bool window_converged(const std::vector<double>& v, std::size_t w, double tol) {
  const double last = window_mean(v, v.size() - w, w);
  const double prev = window_mean(v, v.size() - 2 * w, w);
  return std::abs(last - prev) / std::max(std::abs(prev), 1e-6) < tol;
}

}  // namespace

int pretrain_on_buffer(DdpgAgent& agent, const ReplayBuffer& buffer, const RLConfig& cfg,
                       Rng& sample_rng, const std::function<void(std::size_t)>& on_update) {
  const auto w = static_cast<std::size_t>(cfg.convergence_window);
  std::vector<double> critic_losses, actor_losses;
  int updates = 0;
  while (updates < cfg.pretrain_max_updates) {
    if (on_update) on_update(buffer.size());
    const auto losses = ddpg_update(agent, draw_batch(buffer, sample_rng, cfg.batch_size), cfg);
    critic_losses.push_back(losses.critic_loss);
    actor_losses.push_back(losses.actor_loss);
    ++updates;
    if (critic_losses.size() >= 2 * w &&
        window_converged(critic_losses, w, cfg.convergence_rel_tol) &&
        window_converged(actor_losses, w, cfg.convergence_rel_tol)) {
      break;
    }
  }
  return updates;
}

Checkpoint rl_checkpoint(const ActorNet& actor, const CriticNet& critic, CheckpointMeta meta) {
  Checkpoint ckpt;
  ckpt.entries = actor.export_entries();
  auto c = critic.export_entries("critic/");
  ckpt.entries.insert(ckpt.entries.end(), c.begin(), c.end());
  ckpt.meta = std::move(meta);
  return ckpt;
}

RLResult train_rl(const Checkpoint* il_ckpt, const DrivingEnv& env_template, const NetConfig& net,
                  const RLConfig& cfg, const std::string& config_digest, const RLHooks& hooks) {
  cfg.validate();
  const double speed_scale = env_template.reward_config().v_theta;
  DrivingEnv env(env_template.track_ptr(), env_template.episode_config(),
                 env_template.reward_config(), env_template.dynamics(),
                 env_template.render_config());
  Rng init = make_rng(cfg.seed, "init");
  Rng replay_rng = make_rng(cfg.seed, "replay");
  Rng noise_rng = make_rng(cfg.seed, "noise");
  const std::uint64_t env_seed = derive_seed(cfg.seed, "env");
  const std::uint64_t eval_seed = derive_seed(cfg.seed, "eval");

  std::unique_ptr<DdpgAgent> agent;
  ReplayBuffer buffer(static_cast<std::size_t>(cfg.replay_capacity));
  RLResult result;

  if (cfg.baseline) {
    agent = std::make_unique<DdpgAgent>(build_actor(net, &init, speed_scale),
                                        build_critic(net, &init, speed_scale));
  } else {
    if (il_ckpt == nullptr) throw TransferError("rl: an IL checkpoint is required");
    if (il_ckpt->meta.phase != "il") {
      throw TransferError("rl: expected an IL checkpoint, got phase '" + il_ckpt->meta.phase + "'");
    }
    auto [actor, critic] = transfer_from_il(*il_ckpt, net, init, speed_scale);
    agent = std::make_unique<DdpgAgent>(std::move(actor), std::move(critic));
  }
  const bool cache = !cfg.baseline && agent->backbone_frozen();

  if (!cfg.baseline) {
    ActorNet il_policy = actor_from_checkpoint(*il_ckpt, net, speed_scale);
    prefill_replay(il_policy, env, buffer, cfg, cache);
    result.pretrain_updates =
        pretrain_on_buffer(*agent, buffer, cfg, replay_rng, [&](std::size_t size) {
          if (hooks.on_update) hooks.on_update(size);
        });
  }
  if (hooks.on_pretrained) hooks.on_pretrained(*agent);

  const int max_steps = env.episode_config().max_steps;
  ActorNet best_actor = agent->actor;
  CriticNet best_critic = agent->critic;
  double best_return = -std::numeric_limits<double>::infinity();
  double critic_sum = 0.0, actor_sum = 0.0;
  int loss_count = 0;

  auto evaluate_now = [&](int step) {
    const auto report =
        evaluate(actor_policy(agent->actor), env, cfg.eval_episodes, max_steps, eval_seed, "rl");
    RLHistoryRow row;
    row.env_step = step;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    row.critic_loss = loss_count > 0 ? critic_sum / loss_count : nan;
    row.actor_loss = loss_count > 0 ? actor_sum / loss_count : nan;
    row.eval_return = report.mean_return;
    result.history.push_back(row);
    critic_sum = actor_sum = 0.0;
    loss_count = 0;
    if (report.mean_return > best_return) {
      best_return = report.mean_return;
      best_actor = agent->actor;
      best_critic = agent->critic;
      result.best_env_step = step;
    }
  };
  evaluate_now(0);

  std::uint64_t episode = 0;
  auto obs = std::make_shared<const Observation>(env.reset(derive_seed(env_seed, episode++)));
  nn::Tensor f = cache ? observation_features(agent->actor, *obs) : nn::Tensor{};
  for (int step = 1; step <= cfg.total_env_steps; ++step) {
    Action a;
    if (cfg.baseline) {
      a = actor_forward(agent->actor, *obs);
      const double sigma = cfg.exploration_sigma;
      a = Action::clamped(a.throttle + sigma * standard_normal(noise_rng),
                          a.brake + sigma * standard_normal(noise_rng),
                          a.steering + sigma * standard_normal(noise_rng));
    } else {
      a = cache ? actor_forward_from_features(agent->actor, f, *obs) : act_no_noise(agent->actor, *obs);
    }
    if (hooks.on_env_action) hooks.on_env_action(*obs, a, agent->actor);

    StepResult s = env.step(a);
    auto next = std::make_shared<const Observation>(std::move(s.obs));
    ReplayItem item{obs, a, static_cast<float>(s.info.reward.r), next, s.done, {}, {}};
    nn::Tensor nf;
    if (cache) {
      nf = observation_features(agent->actor, *next);
      item.features = f.values;
      item.next_features = nf.values;
    }
    buffer.push(std::move(item));

    if (buffer.size() >= static_cast<std::size_t>(cfg.batch_size)) {
      for (int u = 0; u < cfg.updates_per_step; ++u) {
        if (hooks.on_update) hooks.on_update(buffer.size());
        UpdateLosses losses;
        try {
          losses = ddpg_update(*agent, draw_batch(buffer, replay_rng, cfg.batch_size), cfg);
        } catch (const NumericError& e) {
          throw NumericError(std::string(e.what()) + " at env step " + std::to_string(step));
        }
        critic_sum += losses.critic_loss;
        actor_sum += losses.actor_loss;
        ++loss_count;
      }
    }

    if (s.done) {
      obs = std::make_shared<const Observation>(env.reset(derive_seed(env_seed, episode++)));
      if (cache) f = observation_features(agent->actor, *obs);
    } else {
      obs = std::move(next);
      f = std::move(nf);
    }
    if (step % cfg.eval_interval == 0 || step == cfg.total_env_steps) evaluate_now(step);
  }

  result.checkpoint = rl_checkpoint(
      best_actor, best_critic,
      CheckpointMeta{"rl", cfg.seed, reproducible_timestamp(), config_digest});
  return result;
}

void write_rl_history_csv(const std::vector<RLHistoryRow>& history,
                          const std::filesystem::path& path) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& h : history) {
    rows.push_back({std::to_string(h.env_step), csv_number(h.critic_loss),
                    csv_number(h.actor_loss), csv_number(h.eval_return)});
  }
  write_csv(path, {"env_step", "critic_loss", "actor_loss", "eval_return"}, rows);
}

}  // namespace drive
