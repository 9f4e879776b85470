#include "drive/policy.hpp"

#include <algorithm>
#include <map>

#include "drive/errors.hpp"

namespace drive {

using nn::LayerSpec;

void NetConfig::validate() const {
  if (image_hw < 8) throw ConfigError("net: image_hw must be at least 8");
  if (stem_channels <= 0 || feature_dim <= 0) throw ConfigError("net: widths must be positive");
  if (residual_blocks < 1) throw ConfigError("net: residual_blocks must be >= 1");
  if (fc_widths.size() != 2) {
    throw ConfigError("net: exactly two hidden FC widths are required (fc1, fc2, head)");
  }
  for (int w : fc_widths) {
    if (w <= 0) throw ConfigError("net: fc widths must be positive");
  }
  if (action_dim != kActionDim) throw ConfigError("net: action_dim must be 3");
}

std::vector<LayerSpec> backbone_specs(const NetConfig& cfg) {
  const int c = cfg.stem_channels;
  std::vector<LayerSpec> specs{
      LayerSpec::conv2d("stem.conv1", 1, c, 2), LayerSpec::relu(),
      LayerSpec::conv2d("stem.conv2", c, c, 2), LayerSpec::relu()};
  for (int b = 1; b <= cfg.residual_blocks; ++b) {
    specs.push_back(LayerSpec::residual_block("block" + std::to_string(b), c));
  }
  specs.push_back(LayerSpec::conv2d("proj.conv", c, cfg.feature_dim, 2));
  specs.push_back(LayerSpec::relu());
  specs.push_back(LayerSpec::global_avg_pool());
  return specs;
}

namespace {

std::vector<LayerSpec> shared_head_specs(const NetConfig& cfg) {
  return {LayerSpec::concat_input("speed", 1),
          LayerSpec::fully_connected("fc1", cfg.feature_dim + 1, cfg.fc_widths[0]),
          LayerSpec::relu(),
          LayerSpec::fully_connected("fc2", cfg.fc_widths[0], cfg.fc_widths[1]),
          LayerSpec::relu()};
}

TwoStageNet build_two_stage(const NetConfig& cfg, std::vector<LayerSpec> head, Rng* init,
                            double speed_scale) {
  cfg.validate();
  if (!(speed_scale > 0.0)) throw ConfigError("net: speed scale must be positive");
  TwoStageNet net;
  net.cfg = cfg;
  net.speed_scale = speed_scale;
  net.backbone = nn::Network<float>("image", {1, cfg.image_hw, cfg.image_hw}, backbone_specs(cfg));
  net.head = nn::Network<float>("features", {cfg.feature_dim}, head);
  if (init != nullptr) {
    net.backbone.init_he_uniform(*init);
    net.head.init_he_uniform(*init);
  }
  return net;
}

}  // namespace

std::vector<LayerSpec> actor_head_specs(const NetConfig& cfg) {
  auto specs = shared_head_specs(cfg);
  specs.push_back(LayerSpec::fully_connected("head", cfg.fc_widths[1], kActionDim));
  specs.push_back(LayerSpec::sigmoid(0, 2));
  specs.push_back(LayerSpec::tanh(2, 3));
  return specs;
}

std::vector<LayerSpec> critic_head_specs(const NetConfig& cfg) {
  auto specs = shared_head_specs(cfg);
  specs.push_back(LayerSpec::concat_input("action", kActionDim));
  specs.push_back(LayerSpec::fully_connected("head", cfg.fc_widths[1] + kActionDim, 1));
  return specs;
}

ActorNet build_actor(const NetConfig& cfg, Rng* init, double speed_scale) {
  return ActorNet{build_two_stage(cfg, actor_head_specs(cfg), init, speed_scale)};
}

CriticNet build_critic(const NetConfig& cfg, Rng* init, double speed_scale) {
  return CriticNet{build_two_stage(cfg, critic_head_specs(cfg), init, speed_scale)};
}

bool is_conv_parameter(const std::string& name) {
  return name.starts_with("stem.") || name.starts_with("block") || name.starts_with("proj.");
}

bool is_head_parameter(const std::string& name) { return name.starts_with("head."); }

std::vector<nn::Parameter<float>*> TwoStageNet::parameters() {
  auto p = backbone.parameters();
  auto q = head.parameters();
  p.insert(p.end(), q.begin(), q.end());
  return p;
}

std::vector<const nn::Parameter<float>*> TwoStageNet::parameters() const {
  auto p = backbone.parameters();
  auto q = head.parameters();
  p.insert(p.end(), q.begin(), q.end());
  return p;
}

nn::Parameter<float>* TwoStageNet::find(std::string_view name) {
  if (auto* p = backbone.find(name)) return p;
  return head.find(name);
}

std::size_t TwoStageNet::parameter_count() const {
  return backbone.parameter_count() + head.parameter_count();
}

nn::Tensor TwoStageNet::features(const nn::Tensor& images) { return backbone.forward(images); }

std::vector<CheckpointEntry> TwoStageNet::export_entries(const std::string& prefix) const {
  std::vector<CheckpointEntry> out;
  for (const auto* p : parameters()) {
    out.push_back({prefix + p->name, p->value.shape, p->frozen, p->value.values});
  }
  return out;
}

void TwoStageNet::import_entries(const std::vector<CheckpointEntry>& entries,
                                 const std::string& prefix) {
  std::map<std::string, const CheckpointEntry*, std::less<>> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;
  std::string problems;
  for (auto* p : parameters()) {
    auto it = by_name.find(prefix + p->name);
    if (it == by_name.end()) {
      problems += " " + p->name + " (missing)";
    } else if (it->second->shape != p->value.shape) {
      problems += " " + p->name + " (shape " + nn::shape_string(it->second->shape) + " vs " +
                  nn::shape_string(p->value.shape) + ")";
    }
  }
  if (!problems.empty()) throw TransferError("checkpoint does not match network:" + problems);
  for (auto* p : parameters()) {
    const auto* e = by_name.find(prefix + p->name)->second;
    p->value.values = e->values;
    p->frozen = e->frozen;
  }
}

nn::Tensor image_batch(std::span<const Observation* const> obs) {
  if (obs.empty()) throw ShapeError("image_batch: empty batch");
  const int h = obs.front()->height;
  const int w = obs.front()->width;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  nn::Tensor t({static_cast<int>(obs.size()), 1, h, w});
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (obs[i]->height != h || obs[i]->width != w || obs[i]->image.size() != plane) {
      throw ShapeError("image_batch: mixed resolutions");
    }
    std::copy(obs[i]->image.begin(), obs[i]->image.end(), t.data() + i * plane);
  }
  return t;
}

nn::Tensor speed_batch(std::span<const Observation* const> obs, double scale) {
  nn::Tensor t({static_cast<int>(obs.size()), 1});
  for (std::size_t i = 0; i < obs.size(); ++i) {
    t[i] = static_cast<float>(static_cast<double>(obs[i]->speed) / scale);
  }
  return t;
}

nn::Tensor action_batch(std::span<const Action* const> actions) {
  nn::Tensor t({static_cast<int>(actions.size()), kActionDim});
  for (std::size_t i = 0; i < actions.size(); ++i) {
    t[3 * i] = actions[i]->throttle;
    t[3 * i + 1] = actions[i]->brake;
    t[3 * i + 2] = actions[i]->steering;
  }
  return t;
}

Action tensor_to_action(const nn::Tensor& out, int row) {
  const std::size_t base = static_cast<std::size_t>(row) * kActionDim;
  // Squashing already guarantees the ranges; clamping only absorbs rounding
  // at the saturated ends.
  return Action::clamped(out[base], out[base + 1], out[base + 2]);
}

nn::Tensor actor_head_forward(ActorNet& actor, const nn::Tensor& features,
                              const nn::Tensor& speeds) {
  nn::TensorMap<float> side;
  side.emplace("speed", speeds);
  return actor.head.forward(features, side);
}

nn::Tensor critic_head_forward(CriticNet& critic, const nn::Tensor& features,
                               const nn::Tensor& speeds, const nn::Tensor& actions) {
  nn::TensorMap<float> side;
  side.emplace("speed", speeds);
  side.emplace("action", actions);
  return critic.head.forward(features, side);
}

nn::Tensor observation_features(TwoStageNet& net, const Observation& obs) {
  const Observation* one[] = {&obs};
  return net.features(image_batch(one));
}

Action actor_forward_from_features(ActorNet& actor, const nn::Tensor& features,
                                   const Observation& obs) {
  const Observation* one[] = {&obs};
  return tensor_to_action(
      actor_head_forward(actor, features, speed_batch(one, actor.speed_scale)), 0);
}

Action actor_forward(ActorNet& actor, const Observation& obs) {
  return actor_forward_from_features(actor, observation_features(actor, obs), obs);
}

double critic_forward(CriticNet& critic, const Observation& obs, const Action& action) {
  const Observation* one[] = {&obs};
  const Action* act[] = {&action};
  const nn::Tensor f = critic.features(image_batch(one));
  return critic_head_forward(critic, f, speed_batch(one, critic.speed_scale), action_batch(act))[0];
}

Checkpoint actor_checkpoint(const ActorNet& actor, CheckpointMeta meta) {
  Checkpoint ckpt;
  ckpt.entries = actor.export_entries();
  ckpt.meta = std::move(meta);
  return ckpt;
}

ActorNet actor_from_checkpoint(const Checkpoint& ckpt, const NetConfig& cfg, double speed_scale) {
  ActorNet actor = build_actor(cfg, nullptr, speed_scale);
  actor.import_entries(ckpt.entries);
  return actor;
}

std::pair<ActorNet, CriticNet> transfer_from_il(const Checkpoint& il_ckpt, const NetConfig& cfg,
                                                Rng& init, double speed_scale) {
  ActorNet actor = build_actor(cfg, nullptr, speed_scale);
  CriticNet critic = build_critic(cfg, nullptr, speed_scale);

  // Validate everything before touching any weights so the error lists all
  // offending layers at once.
  std::string problems;
  auto check = [&](TwoStageNet& net) {
    for (auto* p : net.parameters()) {
      if (is_head_parameter(p->name)) continue;
      const auto* e = il_ckpt.find(p->name);
      if (e == nullptr) {
        problems += " " + p->name + " (missing)";
      } else if (e->shape != p->value.shape) {
        problems += " " + p->name + " (shape " + nn::shape_string(e->shape) + " vs " +
                    nn::shape_string(p->value.shape) + ")";
      }
    }
  };
  check(actor);
  if (problems.empty()) check(critic);
  if (!problems.empty()) throw TransferError("IL checkpoint does not match config:" + problems);

  auto copy_into = [&](TwoStageNet& net) {
    for (auto* p : net.parameters()) {
      if (is_head_parameter(p->name)) continue;
      p->value.values = il_ckpt.find(p->name)->values;
      p->frozen = is_conv_parameter(p->name);
    }
  };
  copy_into(actor);
  copy_into(critic);

  auto init_head = [&](TwoStageNet& net) {
    nn::Network<float> fresh("features", {cfg.feature_dim}, net.head.specs());
    fresh.init_he_uniform(init);
    for (auto* p : net.head.parameters()) {
      if (!is_head_parameter(p->name)) continue;
      p->value = fresh.find(p->name)->value;
      p->frozen = false;
    }
  };
  init_head(actor);
  init_head(critic);
  return {std::move(actor), std::move(critic)};
}

}  // namespace drive
