#include "drive/il_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "drive/errors.hpp"
#include "drive/io.hpp"

namespace drive {

void ILConfig::validate() const {
  if (epochs < 1) throw ConfigError("il: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("il: batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("il: lr must be positive");
  huber.validate();
}

namespace {

constexpr std::size_t kEvalBatch = 256;

struct Batch {
  nn::Tensor images;
  nn::Tensor speeds;
  nn::Tensor targets;
};

Batch make_batch(const DemoSet& demos, std::span<const std::size_t> idx, double speed_scale) {
  std::vector<const Observation*> obs;
  std::vector<const Action*> act;
  obs.reserve(idx.size());
  act.reserve(idx.size());
  for (std::size_t i : idx) {
    obs.push_back(&demos.samples[i].obs);
    act.push_back(&demos.samples[i].action);
  }
  return {image_batch(obs), speed_batch(obs, speed_scale), action_batch(act)};
}

nn::Tensor predict(ActorNet& actor, const Batch& b) {
  const nn::Tensor f = actor.features(b.images);
  return actor_head_forward(actor, f, b.speeds);
}

}  // namespace

double demo_loss(ActorNet& actor, const DemoSet& demos, const nn::HuberConfig& huber) {
  if (demos.empty()) throw DataError("il: cannot evaluate the loss of an empty demo set");
  // Per-batch losses are means; weighting by batch size gives the overall mean.
  double total = 0.0;
  std::vector<std::size_t> idx(demos.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t start = 0; start < idx.size(); start += kEvalBatch) {
    const std::size_t n = std::min(kEvalBatch, idx.size() - start);
    const Batch b = make_batch(demos, std::span(idx).subspan(start, n), actor.speed_scale);
    total += nn::huber_loss(predict(actor, b), b.targets, huber).loss * static_cast<double>(n);
  }
  return total / static_cast<double>(demos.size());
}

double eval_test_loss(const Checkpoint& ckpt, const DemoSet& test, const nn::HuberConfig& huber,
                      const NetConfig& net, double speed_scale) {
  ActorNet actor = actor_from_checkpoint(ckpt, net, speed_scale);
  return demo_loss(actor, test, huber);
}

ILResult train_il(const DemoSet& train, const DemoSet& test, const NetConfig& net,
                  const ILConfig& cfg, double speed_scale, const std::string& config_digest) {
  cfg.validate();
  if (train.empty()) throw DataError("il: the training set is empty");

  Rng init = make_rng(cfg.seed, "init");
  Rng shuffle = make_rng(cfg.seed, "shuffle");
  ActorNet actor = build_actor(net, &init, speed_scale);
  nn::Optimizer opt(nn::Optimizer::Mode::adam);
  const auto params = actor.parameters();

  ILResult result;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[uniform_index(shuffle, i)]);
    }
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t n = std::min(batch, order.size() - start);
      const Batch b = make_batch(train, std::span(order).subspan(start, n), speed_scale);
      const auto loss = nn::huber_loss(predict(actor, b), b.targets, cfg.huber);
      if (!std::isfinite(loss.loss)) {
        throw NumericError("il: non-finite training loss in epoch " + std::to_string(epoch));
      }
      total += loss.loss * static_cast<double>(n);
      actor.head.backward_in_place(loss.grad, true);
      actor.backbone.backward_in_place(actor.head.input_gradients().at("features"), false);
      opt.step(params, cfg.lr);
    }
    ILEpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = total / static_cast<double>(train.size());
    stats.test_loss = test.empty() ? std::numeric_limits<double>::quiet_NaN()
                                   : demo_loss(actor, test, cfg.huber);
    if (!std::isfinite(stats.train_loss)) {
      throw NumericError("il: non-finite training loss in epoch " + std::to_string(epoch));
    }
    result.history.push_back(stats);
  }

  result.checkpoint = actor_checkpoint(
      actor, CheckpointMeta{"il", cfg.seed, reproducible_timestamp(), config_digest});
  return result;
}

void write_il_history_csv(const std::vector<ILEpochStats>& history,
                          const std::filesystem::path& path) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& h : history) {
    rows.push_back({std::to_string(h.epoch), csv_number(h.train_loss), csv_number(h.test_loss)});
  }
  write_csv(path, {"epoch", "train_loss", "test_loss"}, rows);
}

}  // namespace drive
