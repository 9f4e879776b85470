#include "drive/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "drive/errors.hpp"

namespace drive {

namespace {

using nlohmann::json;

// Each visitor sees (key, member reference) for every serialized field.
template <typename F> void visit(RewardConfig& c, F&& f) {
  f("d_theta", c.d_theta);
  f("v_theta", c.v_theta);
  f("lambda_d", c.lambda_d);
  f("lambda_v", c.lambda_v);
  f("cutoff", c.cutoff);
}

template <typename F> void visit(NetConfig& c, F&& f) {
  f("image_hw", c.image_hw);
  f("stem_channels", c.stem_channels);
  f("residual_blocks", c.residual_blocks);
  f("feature_dim", c.feature_dim);
  f("fc_widths", c.fc_widths);
  f("action_dim", c.action_dim);
}

template <typename F> void visit(ILConfig& c, F&& f) {
  f("epochs", c.epochs);
  f("batch_size", c.batch_size);
  f("lr", c.lr);
  f("huber_delta", c.huber.delta);
}

template <typename F> void visit(RLConfig& c, F&& f) {
  f("gamma", c.gamma);
  f("tau", c.tau);
  f("actor_lr", c.actor_lr);
  f("critic_lr", c.critic_lr);
  f("batch_size", c.batch_size);
  f("replay_capacity", c.replay_capacity);
  f("prefill_size", c.prefill_size);
  f("pretrain_max_updates", c.pretrain_max_updates);
  f("convergence_window", c.convergence_window);
  f("convergence_rel_tol", c.convergence_rel_tol);
  f("total_env_steps", c.total_env_steps);
  f("updates_per_step", c.updates_per_step);
  f("eval_interval", c.eval_interval);
  f("eval_episodes", c.eval_episodes);
  f("baseline", c.baseline);
  f("exploration_sigma", c.exploration_sigma);
  f("squared_critic_loss", c.squared_critic_loss);
  f("huber_delta", c.huber.delta);
}

template <typename F> void visit(ExpertConfig& c, F&& f) {
  f("lookahead", c.lookahead);
  f("target_speed_straight", c.target_speed_straight);
  f("curvature_slowdown_gain", c.curvature_slowdown_gain);
  f("curvature_preview", c.curvature_preview);
  f("speed_kp", c.speed_kp);
}

template <typename F> void visit(EpisodeConfig& c, F&& f) {
  f("max_steps", c.max_steps);
  f("dt", c.dt);
  f("randomize_start", c.randomize_start);
  f("randomize_condition", c.randomize_condition);
}

template <typename F> void visit(DynamicsConfig& c, F&& f) {
  f("wheelbase", c.wheelbase);
  f("max_steer", c.max_steer);
  f("throttle_accel", c.throttle_accel);
  f("brake_decel", c.brake_decel);
  f("drag", c.drag);
  f("max_speed", c.max_speed);
}

template <typename F> void visit(RecordConfig& c, F&& f) {
  f("episodes", c.episodes);
  f("test_fraction", c.test_fraction);
  f("augment", c.augment);
}

template <typename F> void visit(EvalConfig& c, F&& f) {
  f("episodes", c.episodes);
  f("seeds", c.seeds);
}

template <typename F> void visit(TeleopConfig& c, F&& f) {
  f("port", c.port);
  f("tick_ms", c.tick_ms);
  f("hold_ticks", c.hold_ticks);
}

template <typename F> void visit_sections(ExperimentConfig& c, F&& f) {
  f("reward", c.reward);
  f("net", c.net);
  f("il", c.il);
  f("rl", c.rl);
  f("expert", c.expert);
  f("episode", c.episode);
  f("dynamics", c.dynamics);
  f("record", c.record);
  f("eval", c.eval);
  f("teleop", c.teleop);
}

json to_json_value(ExperimentConfig cfg) {
  json j = json::object();
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir;
  j["track_path"] = cfg.track_path;
  visit_sections(cfg, [&](const char* section, auto& sub) {
    json s = json::object();
    visit(sub, [&](const char* key, auto& value) { s[key] = value; });
    j[section] = std::move(s);
  });
  return j;
}

template <typename T>
void assign(const json& value, T& out, const std::string& where) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!value.is_boolean()) throw ConfigError("config: '" + where + "' must be a boolean");
    } else if constexpr (std::is_arithmetic_v<T>) {
      if (!value.is_number()) throw ConfigError("config: '" + where + "' must be a number");
      if constexpr (std::is_integral_v<T>) {
        if (!value.is_number_integer()) {
          throw ConfigError("config: '" + where + "' must be an integer");
        }
        if constexpr (std::is_unsigned_v<T>) {
          if (!value.is_number_unsigned()) {
            throw ConfigError("config: '" + where + "' must be non-negative");
          }
        }
      }
    }
    out = value.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config: '" + where + "' has the wrong type (" + e.what() + ")");
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  reward.validate();
  net.validate();
  il.validate();
  rl.validate();
  expert.validate(dynamics);
  episode.validate();
  if (record.episodes < 0) throw ConfigError("config: record.episodes must be >= 0");
  if (!(record.test_fraction > 0.0 && record.test_fraction < 1.0)) {
    throw ConfigError("config: record.test_fraction must lie in (0, 1)");
  }
  if (eval.episodes < 1) throw ConfigError("config: eval.episodes must be >= 1");
  if (eval.seeds.empty()) throw ConfigError("config: eval.seeds must not be empty");
  if (teleop.port < 0 || teleop.port > 65535) throw ConfigError("config: teleop.port out of range");
  if (teleop.tick_ms < 1) throw ConfigError("config: teleop.tick_ms must be >= 1");
  if (teleop.hold_ticks < 0) throw ConfigError("config: teleop.hold_ticks must be >= 0");
  if (!(dynamics.wheelbase > 0.0 && dynamics.max_speed > 0.0)) {
    throw ConfigError("config: dynamics constants must be positive");
  }
}

std::string config_to_json(const ExperimentConfig& cfg, int indent) {
  return to_json_value(cfg).dump(indent);
}

ExperimentConfig config_from_json(const std::string& json_text, ExperimentConfig base) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: the top level must be an object");

  for (const auto& [key, value] : j.items()) {
    if (key == "seed") {
      assign(value, base.seed, key);
    } else if (key == "out_dir") {
      assign(value, base.out_dir, key);
    } else if (key == "track_path") {
      assign(value, base.track_path, key);
    } else {
      bool known = false;
      visit_sections(base, [&](const char* section, auto& sub) {
        if (key != section) return;
        known = true;
        if (!value.is_object()) throw ConfigError("config: '" + key + "' must be an object");
        for (const auto& [field, v] : value.items()) {
          bool found = false;
          visit(sub, [&](const char* name, auto& member) {
            if (field != name) return;
            found = true;
            assign(v, member, key + "." + field);
          });
          if (!found) throw ConfigError("config: unknown key '" + key + "." + field + "'");
        }
      });
      if (!known) throw ConfigError("config: unknown key '" + key + "'");
    }
  }
  return base;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str(), std::move(base));
}

std::string config_digest(const ExperimentConfig& cfg) {
  ExperimentConfig stamped = cfg;
  stamped.out_dir.clear();
  const std::string text = config_to_json(stamped, -1);
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Track make_track(const ExperimentConfig& cfg) {
  if (cfg.track_path.empty()) return Track(default_track());
  return Track(load_track_json(cfg.track_path));
}

DrivingEnv make_env(const ExperimentConfig& cfg) {
  return DrivingEnv(std::make_shared<const Track>(make_track(cfg)), cfg.episode, cfg.reward,
                    cfg.dynamics);
}

}  // namespace drive
