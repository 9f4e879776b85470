#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "drive/env.hpp"
#include "drive/expert.hpp"
#include "drive/il_trainer.hpp"
#include "drive/policy.hpp"
#include "drive/reward.hpp"
#include "drive/rl_trainer.hpp"
#include "drive/teleop.hpp"

namespace drive {

struct RecordConfig {
  int episodes = 8;
  double test_fraction = 0.2;
  bool augment = true;
};

struct EvalConfig {
  int episodes = 5;
  std::vector<std::uint64_t> seeds{101, 202, 303};
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "runs/default";
  std::string track_path;  // empty selects the built-in circuit
  RewardConfig reward;
  NetConfig net;
  ILConfig il;
  RLConfig rl;
  ExpertConfig expert;
  EpisodeConfig episode;
  DynamicsConfig dynamics;
  RecordConfig record;
  EvalConfig eval;
  TeleopConfig teleop;

  /// Throws ConfigError naming the first invalid field.
  void validate() const;
};

/// Canonical JSON (sorted keys, every field present).
std::string config_to_json(const ExperimentConfig& cfg, int indent = 2);
/// Overlays the keys present in `json_text` onto `base`. Unknown keys and
/// mistyped values raise ConfigError.
ExperimentConfig config_from_json(const std::string& json_text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});

/// 64-bit FNV-1a of the compact canonical JSON with out_dir blanked, as 16 hex
/// digits. Runs differing only in output directory share a digest.
std::string config_digest(const ExperimentConfig& cfg);

/// The configured track, or the built-in circuit when no path is set.
Track make_track(const ExperimentConfig& cfg);
DrivingEnv make_env(const ExperimentConfig& cfg);

}  // namespace drive
