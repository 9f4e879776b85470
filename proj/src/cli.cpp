#include "drive/cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "drive/config.hpp"
#include "drive/dataset.hpp"
#include "drive/errors.hpp"
#include "drive/eval.hpp"
#include "drive/il_trainer.hpp"
#include "drive/io.hpp"
#include "drive/rl_trainer.hpp"
#include "drive/teleop.hpp"

namespace drive {

namespace {

namespace fs = std::filesystem;

struct Flags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> episodes;
  std::string mode = "expert";
  std::vector<std::string> policies;
  bool baseline = false;
  std::string track;
  std::optional<int> port;
  std::string demos;
  std::string il;
};

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::is_regular_file(path)) {
    throw IoError(what + " '" + path.string() + "' does not exist");
  }
}

ExperimentConfig resolve(const Flags& f) {
  ExperimentConfig cfg;
  if (!f.config_path.empty()) {
    require_file(f.config_path, "config file");
    cfg = load_config(f.config_path);
  }
  if (f.seed) cfg.seed = *f.seed;
  if (!f.out.empty()) cfg.out_dir = f.out;
  if (!f.track.empty()) {
    require_file(f.track, "track file");
    cfg.track_path = f.track;
  }
  if (f.port) cfg.teleop.port = *f.port;
  cfg.il.seed = cfg.seed;
  cfg.rl.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

void write_resolved(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  const fs::path path = fs::path(cfg.out_dir) / "resolved-config.json";
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << config_to_json(cfg) << '\n';
  if (!out) throw IoError("cannot write '" + path.string() + "'");
}

fs::path out_file(const ExperimentConfig& cfg, const std::string& name) {
  return fs::path(cfg.out_dir) / name;
}

TaggedPolicy load_policy(const std::string& spec, const ExperimentConfig& cfg) {
  if (spec == "random") return {"random", random_policy(derive_seed(cfg.seed, "random"))};
  require_file(spec, "policy checkpoint");
  const Checkpoint ckpt = load_checkpoint(spec);
  return {fs::path(spec).stem().string(),
          actor_policy(actor_from_checkpoint(ckpt, cfg.net, cfg.reward.v_theta))};
}

int serve(const ExperimentConfig& cfg, const fs::path& out_path, int stop_after_episodes,
          std::ostream& out) {
  ExperimentConfig teleop_cfg = cfg;
  teleop_cfg.episode.randomize_start = false;
  TeleopSession session(make_env(teleop_cfg), out_path, derive_seed(cfg.seed, "teleop"),
                        cfg.teleop.hold_ticks);
  TeleopServer server(session, static_cast<unsigned short>(cfg.teleop.port), cfg.teleop.tick_ms);
  out << "teleop: listening on port " << server.port() << ", recording to " << out_path.string()
      << std::endl;
  std::function<bool()> finished;
  if (stop_after_episodes > 0) {
    finished = [&] { return session.recorded_episodes() >= stop_after_episodes; };
  }
  server.run(true, finished);
  out << "teleop: " << session.recorded_episodes() << " episodes, " << session.recorded().size()
      << " transitions recorded" << std::endl;
  return kExitOk;
}

int cmd_record(const Flags& f, std::ostream& out) {
  ExperimentConfig cfg = resolve(f);
  if (f.episodes) cfg.record.episodes = *f.episodes;
  if (f.mode != "expert" && f.mode != "teleop") {
    throw ConfigError("record: --mode must be expert or teleop");
  }
  write_resolved(cfg);
  const fs::path path = out_file(cfg, "demos.drvlog");
  if (f.mode == "teleop") return serve(cfg, path, cfg.record.episodes, out);

  DrivingEnv env = make_env(cfg);
  std::vector<Transition> transitions;
  DemoSet demos = collect_demos(expert_source(cfg.expert), env, cfg.record.episodes,
                                derive_seed(cfg.seed, "record"), DemoSource::expert, &transitions);
  write_demo_log(transitions, path);
  out << "record: " << cfg.record.episodes << " episodes, " << demos.size() << " samples -> "
      << path.string() << '\n';
  return kExitOk;
}

int cmd_train_il(const Flags& f, std::ostream& out) {
  const ExperimentConfig cfg = resolve(f);
  const fs::path demos_path = f.demos.empty() ? out_file(cfg, "demos.drvlog") : fs::path(f.demos);
  require_file(demos_path, "demo log");
  write_resolved(cfg);

  const std::vector<Transition> log = read_demo_log(demos_path);
  DemoSet demos = demos_from_transitions(log);
  if (cfg.record.augment) demos = augment_low_speed(demos, cfg.seed);
  auto [train, test] = split_demos(demos, cfg.record.test_fraction, cfg.seed);
  out << "train-il: " << train.size() << " train / " << test.size() << " test samples\n";

  ILResult result = train_il(train, test, cfg.net, cfg.il, cfg.reward.v_theta, config_digest(cfg));
  save_checkpoint(result.checkpoint, out_file(cfg, "il.ckpt"));
  write_il_history_csv(result.history, out_file(cfg, "il_history.csv"));
  if (!result.history.empty()) {
    const auto& last = result.history.back();
    out << "train-il: final train loss " << last.train_loss << ", test loss " << last.test_loss
        << '\n';
  }
  return kExitOk;
}

int cmd_train_rl(const Flags& f, std::ostream& out) {
  ExperimentConfig cfg = resolve(f);
  cfg.rl.baseline = cfg.rl.baseline || f.baseline;
  std::optional<Checkpoint> il;
  if (!cfg.rl.baseline) {
    const fs::path il_path = f.il.empty() ? out_file(cfg, "il.ckpt") : fs::path(f.il);
    require_file(il_path, "IL checkpoint");
    il = load_checkpoint(il_path);
  }
  write_resolved(cfg);

  const DrivingEnv env = make_env(cfg);
  RLResult result =
      train_rl(il ? &*il : nullptr, env, cfg.net, cfg.rl, config_digest(cfg));
  const std::string stem = cfg.rl.baseline ? "rl_baseline" : "rl";
  save_checkpoint(result.checkpoint, out_file(cfg, stem + ".ckpt"));
  write_rl_history_csv(result.history, out_file(cfg, stem + "_history.csv"));
  out << "train-rl: " << (cfg.rl.baseline ? "baseline, " : "")
      << result.pretrain_updates << " pretraining updates, best checkpoint at env step "
      << result.best_env_step << '\n';
  return kExitOk;
}

int cmd_eval(const Flags& f, std::ostream& out) {
  ExperimentConfig cfg = resolve(f);
  if (f.episodes) cfg.eval.episodes = *f.episodes;
  if (f.policies.size() != 1) throw ConfigError("eval: exactly one --policy is required");
  TaggedPolicy policy = load_policy(f.policies.front(), cfg);
  write_resolved(cfg);

  const DrivingEnv env = make_env(cfg);
  EvalReport report = evaluate(policy.policy, env, cfg.eval.episodes, cfg.episode.max_steps,
                               cfg.seed, policy.tag);
  write_eval_csv({report}, out_file(cfg, "eval.csv"));
  out << "eval: " << policy.tag << " mean return " << report.mean_return << " over "
      << cfg.eval.episodes << " episodes\n";
  return kExitOk;
}

int cmd_compare(const Flags& f, std::ostream& out) {
  ExperimentConfig cfg = resolve(f);
  if (f.episodes) cfg.eval.episodes = *f.episodes;
  std::vector<TaggedPolicy> policies;
  for (const auto& p : f.policies) policies.push_back(load_policy(p, cfg));
  write_resolved(cfg);

  const DrivingEnv env = make_env(cfg);
  Comparison cmp = compare(policies, env, cfg.eval.episodes, cfg.episode.max_steps, cfg.eval.seeds);
  write_eval_csv(cmp.reports, out_file(cfg, "compare.csv"));
  write_comparison_csv(cmp, out_file(cfg, "compare_summary.csv"));
  for (const auto& row : cmp.rows) {
    out << "compare: " << row.policy_tag << " mean " << row.mean << " std " << row.stddev << '\n';
  }
  return kExitOk;
}

int cmd_serve(const Flags& f, std::ostream& out) {
  const ExperimentConfig cfg = resolve(f);
  write_resolved(cfg);
  return serve(cfg, out_file(cfg, "teleop.drvlog"), 0, out);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Flags f;
  CLI::App app{"Imitation-pretrained DDPG driving pipeline", "drive"};
  app.require_subcommand(1, 1);

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config_path, "JSON config file; flags override its values");
    sub->add_option("--seed", f.seed, "global seed");
    sub->add_option("--out", f.out, "output directory");
    sub->add_option("--track", f.track, "track JSON file");
  };

  CLI::App* record = app.add_subcommand("record", "collect demonstrations into demos.drvlog");
  add_common(record);
  record->add_option("--episodes", f.episodes, "episodes to record");
  record->add_option("--mode", f.mode, "expert or teleop")->check(CLI::IsMember({"expert", "teleop"}));
  record->add_option("--port", f.port, "websocket port (teleop mode)");

  CLI::App* train_il_cmd = app.add_subcommand("train-il", "behavioral cloning from a demo log");
  add_common(train_il_cmd);
  train_il_cmd->add_option("--demos", f.demos, "demo log (default <out>/demos.drvlog)");

  CLI::App* train_rl_cmd = app.add_subcommand("train-rl", "DDPG fine-tuning or baseline");
  add_common(train_rl_cmd);
  train_rl_cmd->add_flag("--baseline", f.baseline, "pure DDPG from random initialization");
  train_rl_cmd->add_option("--il", f.il, "IL checkpoint (default <out>/il.ckpt)");

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate one policy");
  add_common(eval_cmd);
  eval_cmd->add_option("--policy", f.policies, "checkpoint path or 'random'")->required();
  eval_cmd->add_option("--episodes", f.episodes, "evaluation episodes");

  CLI::App* compare_cmd = app.add_subcommand("compare", "evaluate policies on shared seeds");
  add_common(compare_cmd);
  compare_cmd->add_option("--policy", f.policies, "checkpoint path or 'random' (repeatable)")
      ->required();
  compare_cmd->add_option("--episodes", f.episodes, "evaluation episodes per seed");

  CLI::App* serve_cmd = app.add_subcommand("serve-teleop", "websocket teleoperation server");
  add_common(serve_cmd);
  serve_cmd->add_option("--port", f.port, "websocket port");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    // Runtime failures, including missing inputs, exit with 1.
    if (*record) return cmd_record(f, out);
    if (*train_il_cmd) return cmd_train_il(f, out);
    if (*train_rl_cmd) return cmd_train_rl(f, out);
    if (*eval_cmd) return cmd_eval(f, out);
    if (*compare_cmd) return cmd_compare(f, out);
    if (*serve_cmd) return cmd_serve(f, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace drive
