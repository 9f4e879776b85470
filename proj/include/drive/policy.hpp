#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "drive/nn.hpp"
#include "drive/rng.hpp"
#include "drive/types.hpp"

namespace drive {

struct NetConfig {
  int image_hw = kDefaultImageSize;
  int stem_channels = 8;
  int residual_blocks = 2;
  int feature_dim = 32;
  std::vector<int> fc_widths{64, 32};
  int action_dim = 3;

  void validate() const;
};

inline constexpr int kActionDim = 3;

/// Residual backbone (image -> pooled features) followed by a fully connected
/// head (features, speed [, action] -> output).
struct TwoStageNet {
  nn::Network<float> backbone;
  nn::Network<float> head;
  NetConfig cfg;
  double speed_scale = 20.0;  // speed enters the head as v / speed_scale

  std::vector<nn::Parameter<float>*> parameters();
  std::vector<const nn::Parameter<float>*> parameters() const;
  nn::Parameter<float>* find(std::string_view name);
  std::size_t parameter_count() const;

  nn::Tensor features(const nn::Tensor& images);
  /// Copies parameters into checkpoint entries, prefixing names.
  std::vector<CheckpointEntry> export_entries(const std::string& prefix = "") const;
  /// Loads every parameter from `entries` (names prefixed); throws
  /// TransferError listing missing or mis-shaped layers.
  void import_entries(const std::vector<CheckpointEntry>& entries, const std::string& prefix = "");
};

/// Actor: three outputs squashed to throttle/brake in [0,1] (sigmoid) and
/// steering in [-1,1] (tanh).
struct ActorNet : TwoStageNet {};
/// Critic: one linear output fed by fc2 concatenated with the action.
struct CriticNet : TwoStageNet {};

/// Architecture only; all weights zero. Pass an Rng to He-initialize.
ActorNet build_actor(const NetConfig& cfg, Rng* init = nullptr, double speed_scale = 20.0);
CriticNet build_critic(const NetConfig& cfg, Rng* init = nullptr, double speed_scale = 20.0);

std::vector<nn::LayerSpec> backbone_specs(const NetConfig& cfg);
std::vector<nn::LayerSpec> actor_head_specs(const NetConfig& cfg);
std::vector<nn::LayerSpec> critic_head_specs(const NetConfig& cfg);

/// True for parameters of convolutional layers (stem, residual blocks, projection).
bool is_conv_parameter(const std::string& name);
/// True for parameters of the final fully connected layer.
bool is_head_parameter(const std::string& name);

/// [batch, 1, h, w] from observations.
nn::Tensor image_batch(std::span<const Observation* const> obs);
/// [batch, 1] speeds divided by `scale`.
nn::Tensor speed_batch(std::span<const Observation* const> obs, double scale);
nn::Tensor action_batch(std::span<const Action* const> actions);
Action tensor_to_action(const nn::Tensor& out, int row);

/// Head-only evaluation on precomputed features.
nn::Tensor actor_head_forward(ActorNet& actor, const nn::Tensor& features,
                              const nn::Tensor& speeds);
nn::Tensor critic_head_forward(CriticNet& critic, const nn::Tensor& features,
                               const nn::Tensor& speeds, const nn::Tensor& actions);

Action actor_forward(ActorNet& actor, const Observation& obs);
/// Pooled backbone output for one observation, shape [1, feature_dim].
nn::Tensor observation_features(TwoStageNet& net, const Observation& obs);
/// The head half of actor_forward: bitwise equal to actor_forward(actor, obs)
/// when `features` is observation_features(actor, obs).
Action actor_forward_from_features(ActorNet& actor, const nn::Tensor& features,
                                   const Observation& obs);
double critic_forward(CriticNet& critic, const Observation& obs, const Action& action);

Checkpoint actor_checkpoint(const ActorNet& actor, CheckpointMeta meta);
/// Rebuilds an actor from unprefixed checkpoint entries (other entries ignored).
ActorNet actor_from_checkpoint(const Checkpoint& ckpt, const NetConfig& cfg,
                               double speed_scale = 20.0);

/// Initializes actor and critic from an imitation checkpoint: backbone, fc1 and
/// fc2 are copied bitwise, both heads are freshly initialized from `init`, and
/// every convolutional parameter is frozen.
std::pair<ActorNet, CriticNet> transfer_from_il(const Checkpoint& il_ckpt, const NetConfig& cfg,
                                                Rng& init, double speed_scale = 20.0);

}  // namespace drive
