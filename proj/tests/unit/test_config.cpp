#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "json.hpp"

#include "drive/config.hpp"
#include "drive/errors.hpp"

using namespace drive;

TEST(Config, RoundTripPreservesEveryField) {
  ExperimentConfig cfg;
  cfg.seed = 42;
  cfg.out_dir = "elsewhere";
  cfg.reward.lambda_v = 0.3;
  cfg.net.fc_widths = {32, 16};
  cfg.il.epochs = 7;
  cfg.rl.baseline = true;
  cfg.rl.huber.delta = 2.5;
  cfg.episode.randomize_condition = false;
  cfg.eval.seeds = {5, 6};
  cfg.teleop.port = 9000;
  const std::string text = config_to_json(cfg);
  const ExperimentConfig back = config_from_json(text);
  EXPECT_EQ(config_to_json(back), text);
  EXPECT_EQ(back.net.fc_widths, (std::vector<int>{32, 16}));
  EXPECT_EQ(back.eval.seeds, (std::vector<std::uint64_t>{5, 6}));
  EXPECT_EQ(back.rl.huber.delta, 2.5);
  EXPECT_TRUE(back.rl.baseline);
}

TEST(Config, OverlayKeepsUnmentionedFields) {
  ExperimentConfig base;
  base.il.lr = 0.5;
  const ExperimentConfig cfg = config_from_json(R"({"il": {"epochs": 3}, "seed": 9})", base);
  EXPECT_EQ(cfg.il.epochs, 3);
  EXPECT_EQ(cfg.il.lr, 0.5);
  EXPECT_EQ(cfg.seed, 9u);
}

TEST(Config, CanonicalJsonHasSortedCompleteSections) {
  const auto j = nlohmann::json::parse(config_to_json(ExperimentConfig{}));
  for (const char* section : {"reward", "net", "il", "rl", "expert", "episode", "dynamics",
                              "record", "eval", "teleop"}) {
    EXPECT_TRUE(j.contains(section)) << section;
  }
  EXPECT_EQ(j["rl"]["total_env_steps"], 5000);
  EXPECT_EQ(j["reward"]["cutoff"], 0.1);
}

TEST(Config, RejectsUnknownKeysAndWrongTypes) {
  auto message = [](const std::string& text) {
    try {
      config_from_json(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message(R"({"il": {"epochz": 3}})").find("il.epochz"), std::string::npos);
  EXPECT_NE(message(R"({"bogus": 1})").find("bogus"), std::string::npos);
  EXPECT_NE(message(R"({"il": {"epochs": "three"}})"), "no error");
  EXPECT_NE(message(R"({"il": {"epochs": 2.5}})"), "no error");
  EXPECT_NE(message(R"({"rl": {"baseline": 1}})"), "no error");
  EXPECT_NE(message(R"({"seed": -1})"), "no error");
  EXPECT_NE(message(R"({"il": 3})"), "no error");
  EXPECT_NE(message("[1, 2]"), "no error");
  EXPECT_NE(message("{not json"), "no error");
}

TEST(Config, ValidationNamesTheField) {
  ExperimentConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.rl.tau = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.record.test_fraction = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.eval.seeds.clear();
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Config, DigestIgnoresOutputDirectoryOnly) {
  ExperimentConfig a, b;
  b.out_dir = "somewhere/else";
  EXPECT_EQ(config_digest(a), config_digest(b));
  EXPECT_EQ(config_digest(a).size(), 16u);
  b.rl.gamma = 0.98;
  EXPECT_NE(config_digest(a), config_digest(b));
}

TEST(Config, LoadFromFileAndTrack) {
  const auto dir = std::filesystem::temp_directory_path() / "drive_config_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "cfg.json";
  std::ofstream(path) << R"({"episode": {"max_steps": 12}})";
  const ExperimentConfig cfg = load_config(path);
  EXPECT_EQ(cfg.episode.max_steps, 12);
  EXPECT_THROW(load_config(dir / "missing.json"), IoError);

  DrivingEnv env = make_env(cfg);
  env.reset(1);
  int steps = 0;
  while (env.active()) {
    env.step(Action{});
    ++steps;
  }
  EXPECT_EQ(steps, 12);

  ExperimentConfig with_track = cfg;
  with_track.track_path = (dir / "missing_track.json").string();
  EXPECT_THROW(make_track(with_track), IoError);
}
