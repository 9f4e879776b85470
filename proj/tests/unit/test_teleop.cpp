#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "json.hpp"

#include "drive/cli.hpp"
#include "drive/errors.hpp"
#include "drive/io.hpp"
#include "drive/reward.hpp"
#include "drive/teleop.hpp"

using namespace drive;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

DrivingEnv teleop_env(int max_steps) {
  EpisodeConfig ep;
  ep.max_steps = max_steps;
  ep.randomize_start = false;
  return DrivingEnv(std::make_shared<const Track>(default_track()), ep);
}

std::string control(double throttle, double brake, double steering,
                    std::optional<bool> recording = std::nullopt) {
  json j{{"type", "control"}, {"throttle", throttle}, {"brake", brake}, {"steering", steering}};
  if (recording) j["recording"] = *recording;
  return j.dump();
}

std::vector<json> parse_all(const std::vector<std::string>& frames) {
  std::vector<json> out;
  for (const auto& f : frames) out.push_back(json::parse(f));
  return out;
}

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("drive_teleop_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(TeleopSession, HelloDescribesTrack) {
  TeleopSession s(teleop_env(50), {}, 1);
  const json hello = json::parse(s.hello_message());
  EXPECT_EQ(hello["type"], "hello");
  EXPECT_EQ(hello["centerline"].size(), s.env().track().spec().centerline.size());
  EXPECT_EQ(hello["half_width"], s.env().track().spec().half_width);
  EXPECT_EQ(hello["max_steps"], 50);
  EXPECT_TRUE(hello["obstacles"].is_array());
}

TEST(TeleopSession, ControlsAreClamped) {
  TeleopSession s(teleop_env(50), {}, 1);
  EXPECT_FALSE(s.handle_message(control(2.0, -1.0, -3.0)).has_value());
  EXPECT_EQ(s.control(), (Action{1.0f, 0.0f, -1.0f}));
  EXPECT_FALSE(s.handle_message(control(0.25, 0.5, 0.75)).has_value());
  EXPECT_EQ(s.control(), (Action{0.25f, 0.5f, 0.75f}));
}

TEST(TeleopSession, MalformedMessagesYieldErrorsAndChangeNothing) {
  TeleopSession s(teleop_env(50), {}, 1);
  ASSERT_FALSE(s.handle_message(control(0.5, 0.0, 0.1, true)).has_value());
  const Action before = s.control();
  for (const std::string bad :
       {std::string("{nope"), std::string("[1,2]"), std::string(R"({"throttle": 1})"),
        std::string(R"({"type": "fly"})"), std::string(R"({"type": 3})"),
        std::string(R"({"type": "control", "throttle": 1, "brake": 0})"),
        std::string(R"({"type": "control", "throttle": "1", "brake": 0, "steering": 0})"),
        std::string(R"({"type": "control", "throttle": 1, "brake": 0, "steering": 0, "recording": 1})")}) {
    const auto reply = s.handle_message(bad);
    ASSERT_TRUE(reply.has_value()) << bad;
    const json j = json::parse(*reply);
    EXPECT_EQ(j["type"], "error");
    EXPECT_FALSE(j["reason"].get<std::string>().empty());
    EXPECT_EQ(s.control(), before) << bad;
    EXPECT_TRUE(s.recording_requested());
  }
}

TEST(TeleopSession, IdleUntilFirstConnect) {
  TeleopSession s(teleop_env(50), {}, 1);
  EXPECT_TRUE(s.tick().empty());
  EXPECT_EQ(s.episodes_started(), 0);
  s.connect();
  const auto frames = parse_all(s.tick());
  ASSERT_EQ(frames.size(), 1u);
  EXPECT_EQ(frames[0]["type"], "state");
  EXPECT_EQ(frames[0]["step"], 1);
  EXPECT_EQ(s.episodes_started(), 1);
}

TEST(TeleopSession, RecordingTogglesOnlyAtEpisodeBoundaries) {
  TeleopSession s(teleop_env(50), {}, 1);
  s.connect();
  s.tick();
  s.handle_message(control(1, 0, 0, true));
  EXPECT_TRUE(s.recording_requested());
  EXPECT_FALSE(s.recording());
  for (int i = 0; i < 3; ++i) EXPECT_FALSE(parse_all(s.tick())[0]["recording"].get<bool>());
  s.handle_message(R"({"type": "reset"})");
  const auto frames = parse_all(s.tick());
  EXPECT_TRUE(frames[0]["recording"].get<bool>());
  EXPECT_EQ(frames[0]["step"], 1);
  EXPECT_EQ(s.episodes_started(), 2);
  EXPECT_TRUE(s.recorded().empty());  // the unrecorded episode leaves nothing behind

  s.handle_message(control(1, 0, 0, false));
  s.tick();
  EXPECT_TRUE(s.recording());
}

TEST(TeleopSession, ResetFinalizesTruncatedEpisode) {
  TeleopSession s(teleop_env(50), {}, 1);
  s.handle_message(control(1, 0, 0.1, true));
  s.connect();
  for (int i = 0; i < 6; ++i) s.tick();
  EXPECT_EQ(s.recorded_episodes(), 0);
  s.handle_message(R"({"type": "reset"})");
  s.tick();
  ASSERT_EQ(s.recorded().size(), 6u);
  EXPECT_EQ(s.recorded_episodes(), 1);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(s.recorded()[i].done, i == 5);
    EXPECT_EQ(s.recorded()[i].action, (Action{1.0f, 0.0f, 0.1f}));
    if (i + 1 < 6) EXPECT_EQ(s.recorded()[i].next_obs, s.recorded()[i + 1].obs);
  }
}

TEST(TeleopSession, HoldsLastControlThenIdles) {
  TeleopSession s(teleop_env(200), {}, 1, 3);
  s.handle_message(control(1, 0, 0));
  s.connect();
  for (int i = 0; i < 5; ++i) s.tick();
  s.disconnect();
  double last_v = s.env().car().speed;
  for (int i = 0; i < 3; ++i) {
    const auto frames = parse_all(s.tick());
    ASSERT_EQ(frames.size(), 1u);
    EXPECT_GT(frames[0]["v"].get<double>(), last_v);  // still accelerating
    last_v = frames[0]["v"].get<double>();
  }
  EXPECT_EQ(s.env().step_count(), 8);
  EXPECT_TRUE(s.tick().empty());
  EXPECT_EQ(s.control(), Action{});
  EXPECT_EQ(s.env().step_count(), 8);

  // Reconnecting resumes the same episode with the neutral control.
  s.connect();
  const auto frames = parse_all(s.tick());
  EXPECT_EQ(frames[0]["step"], 9);
  EXPECT_EQ(s.episodes_started(), 1);
}

TEST(TeleopSession, NaturalEndWritesLogAndTelemetry) {
  const fs::path dir = temp_dir("session");
  const fs::path log = dir / "t.drvlog";
  TeleopSession s(teleop_env(20), log, 1);
  s.handle_message(control(1, 0, 0.05, true));
  s.connect();
  s.handle_message(R"({"type": "reset"})");
  std::vector<json> ends;
  double state_sum = 0.0;
  for (int i = 0; i < 20; ++i) {
    for (const json& f : parse_all(s.tick())) {
      if (f["type"] == "episode_end") ends.push_back(f);
      else state_sum += f["reward"].get<double>();
    }
  }
  ASSERT_EQ(ends.size(), 1u);
  EXPECT_EQ(ends[0]["steps"], 20);
  EXPECT_DOUBLE_EQ(ends[0]["return"].get<double>(), state_sum);
  EXPECT_EQ(s.episodes_started(), 2);  // auto-reset after the end
  EXPECT_EQ(parse_all(s.tick())[0]["step"], 1);

  const auto transitions = read_demo_log(log);
  ASSERT_EQ(transitions.size(), 20u);
  EXPECT_EQ(transitions, s.recorded());
  EXPECT_TRUE(transitions.back().done);

  // Telemetry rewards recompute from the logged distance and speed.
  std::ifstream csv(fs::path(log.string() + ".telemetry.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "episode,step,d,v,reward");
  int rows = 0;
  while (std::getline(csv, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
    ASSERT_EQ(v.size(), 5u);
    EXPECT_EQ(v[1], rows + 1);
    EXPECT_NEAR(v[4], compute_reward(v[2], v[3]).r, 1e-6);
    EXPECT_EQ(static_cast<float>(v[4]), transitions[rows].reward);
    ++rows;
  }
  EXPECT_EQ(rows, 20);
  fs::remove_all(dir);
}

TEST(TeleopSession, RejectsNegativeHold) {
  EXPECT_THROW(TeleopSession(teleop_env(10), {}, 1, -1), ConfigError);
}

namespace {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

class Client {
 public:
  explicit Client(unsigned short port) : ws_(ioc_) {
    tcp::resolver resolver(ioc_);
    asio::connect(ws_.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    ws_.handshake("127.0.0.1", "/");
  }
  json read() {
    beast::flat_buffer buf;
    ws_.read(buf);
    return json::parse(beast::buffers_to_string(buf.data()));
  }
  void send(const std::string& text) { ws_.write(asio::buffer(text)); }
  void close() {
    beast::error_code ec;
    ws_.close(websocket::close_code::normal, ec);
  }

 private:
  asio::io_context ioc_;
  websocket::stream<tcp::socket> ws_;
};

}  // namespace

TEST(TeleopServer, ScriptedDriverRecordsTrainableLog) {
  const fs::path dir = temp_dir("server");
  const fs::path log = dir / "demos.drvlog";
  TeleopSession session(teleop_env(25), log, 7);
  TeleopServer server(session, 0, 2);
  ASSERT_NE(server.port(), 0);
  std::thread loop([&] { server.run(); });

  std::vector<std::vector<double>> speeds;  // per recorded episode
  bool busy_seen = false;
  try {
    Client driver(server.port());
    EXPECT_EQ(driver.read()["type"], "hello");

    {
      Client intruder(server.port());
      const json reply = intruder.read();
      EXPECT_EQ(reply["type"], "error");
      busy_seen = reply["reason"].get<std::string>().find("busy") != std::string::npos;
    }

    // Wait until the first, unrecorded episode runs so recording starts
    // exactly at the requested reset.
    driver.send(control(0.0, 0.0, 0.0));
    while (driver.read()["type"] != "state") {
    }
    driver.send(control(1.0, 0.0, 0.0, true));
    driver.send(R"({"type": "reset"})");
    driver.send("not json");
    bool error_seen = false;
    std::vector<double> current;
    while (speeds.size() < 2) {
      const json f = driver.read();
      if (f["type"] == "error") {
        error_seen = true;
      } else if (f["type"] == "state" && f["recording"].get<bool>()) {
        if (f["step"] == 1) current.clear();
        current.push_back(f["v"].get<double>());
      } else if (f["type"] == "episode_end" && !current.empty()) {
        speeds.push_back(current);
        current.clear();
      }
    }
    EXPECT_TRUE(error_seen);
    driver.close();
  } catch (const std::exception& e) {
    ADD_FAILURE() << "client: " << e.what();
  }
  server.stop();
  loop.join();
  EXPECT_EQ(session.recorded_episodes(), 2);
  EXPECT_TRUE(busy_seen);

  ASSERT_EQ(speeds.size(), 2u);
  for (const auto& ep : speeds) {
    ASSERT_EQ(ep.size(), 25u);
    for (std::size_t i = 1; i < ep.size(); ++i) EXPECT_GT(ep[i], ep[i - 1]) << "tick " << i;
  }

  const auto transitions = read_demo_log(log);
  ASSERT_EQ(transitions.size(), 50u);
  for (const auto& t : transitions) EXPECT_EQ(t.action, (Action{1.0f, 0.0f, 0.0f}));

  // The recorded log feeds imitation training unchanged.
  const fs::path cfg = dir / "cfg.json";
  std::ofstream(cfg) << R"({
    "net": {"stem_channels": 4, "residual_blocks": 1, "feature_dim": 8, "fc_widths": [16, 8]},
    "record": {"test_fraction": 0.5},
    "il": {"epochs": 1}
  })";
  const std::string out = (dir / "run").string();
  const std::string demos = log.string();
  const std::string cfg_s = cfg.string();
  const char* argv[] = {"drive", "train-il", "--config", cfg_s.c_str(), "--out", out.c_str(),
                        "--demos", demos.c_str()};
  std::ostringstream o, e;
  EXPECT_EQ(run_cli(8, argv, o, e), kExitOk) << e.str();
  EXPECT_EQ(load_checkpoint(dir / "run" / "il.ckpt").meta.phase, "il");
  fs::remove_all(dir);
}

TEST(TeleopServer, StopFromAnotherThread) {
  TeleopSession session(teleop_env(25), {}, 1);
  TeleopServer server(session, 0, 5);
  std::thread loop([&] { server.run(); });
  std::this_thread::sleep_for(std::chrono::milliseconds(30));
  server.stop();
  loop.join();
  EXPECT_EQ(session.episodes_started(), 0);  // nobody connected
}
