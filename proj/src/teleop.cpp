#include "drive/teleop.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

#include "drive/errors.hpp"
#include "drive/io.hpp"
#include "drive/rng.hpp"

namespace drive {

namespace {

using nlohmann::json;

std::string error_frame(const std::string& reason) {
  return json{{"type", "error"}, {"reason", reason}}.dump();
}

float clamp_control(double value, double lo, double hi) {
  return static_cast<float>(std::clamp(value, lo, hi));
}

}  // namespace

TeleopSession::TeleopSession(DrivingEnv env, std::filesystem::path out_path, std::uint64_t seed,
                             int hold_ticks)
    : env_(std::move(env)), out_path_(std::move(out_path)), seed_(seed), hold_ticks_(hold_ticks) {
  if (hold_ticks_ < 0) throw ConfigError("teleop: hold_ticks must be >= 0");
}

std::string TeleopSession::hello_message() const {
  const TrackSpec& spec = env_.track().spec();
  json centerline = json::array();
  for (const Vec2& p : spec.centerline) centerline.push_back({p.x, p.y});
  json obstacles = json::array();
  for (const Obstacle& o : spec.obstacles) {
    obstacles.push_back({{"x", o.center.x}, {"y", o.center.y}, {"radius", o.radius}});
  }
  return json{{"type", "hello"},
              {"centerline", centerline},
              {"half_width", spec.half_width},
              {"obstacles", obstacles},
              {"dt", env_.episode_config().dt},
              {"max_steps", env_.episode_config().max_steps}}
      .dump();
}

std::optional<std::string> TeleopSession::handle_message(const std::string& text) {
  json msg = json::parse(text, nullptr, false);
  if (msg.is_discarded()) return error_frame("malformed JSON");
  if (!msg.is_object()) return error_frame("message must be a JSON object");
  auto type = msg.find("type");
  if (type == msg.end() || !type->is_string()) return error_frame("missing message type");

  if (*type == "reset") {
    reset_requested_ = true;
    return std::nullopt;
  }
  if (*type != "control") return error_frame("unknown message type '" + type->get<std::string>() + "'");

  double values[3];
  const char* names[3] = {"throttle", "brake", "steering"};
  for (int i = 0; i < 3; ++i) {
    auto it = msg.find(names[i]);
    if (it == msg.end() || !it->is_number()) {
      return error_frame(std::string("control field '") + names[i] + "' must be a number");
    }
    values[i] = it->get<double>();
  }
  std::optional<bool> recording;
  if (auto it = msg.find("recording"); it != msg.end()) {
    if (!it->is_boolean()) return error_frame("control field 'recording' must be a boolean");
    recording = it->get<bool>();
  }

  control_.throttle = clamp_control(values[0], 0.0, 1.0);
  control_.brake = clamp_control(values[1], 0.0, 1.0);
  control_.steering = clamp_control(values[2], -1.0, 1.0);
  if (recording) requested_recording_ = *recording;
  return std::nullopt;
}

void TeleopSession::connect() {
  connected_ = true;
  ticks_since_disconnect_ = 0;
}

void TeleopSession::disconnect() {
  connected_ = false;
  ticks_since_disconnect_ = 0;
}

void TeleopSession::start_episode() {
  recording_ = requested_recording_;
  obs_ = env_.reset(derive_seed(seed_, static_cast<std::uint64_t>(episodes_)));
  ++episodes_;
  episode_return_ = 0.0;
}

void TeleopSession::finish_episode(bool truncated) {
  if (recording_ && !pending_.empty()) {
    if (truncated) pending_.back().done = true;
    recorded_.insert(recorded_.end(), pending_.begin(), pending_.end());
    telemetry_.insert(telemetry_.end(), pending_telemetry_.begin(), pending_telemetry_.end());
    ++recorded_episodes_;
    if (!out_path_.empty()) {
      write_demo_log(recorded_, out_path_);
      std::vector<std::vector<std::string>> rows;
      rows.reserve(telemetry_.size());
      for (const auto& t : telemetry_) {
        rows.push_back({std::to_string(t.episode), std::to_string(t.step), csv_number(t.d),
                        csv_number(t.v), csv_number(t.reward)});
      }
      std::filesystem::path csv = out_path_;
      csv += ".telemetry.csv";
      write_csv(csv, {"episode", "step", "d", "v", "reward"}, rows);
    }
  }
  pending_.clear();
  pending_telemetry_.clear();
}

std::string TeleopSession::state_message(double reward) const {
  const CarState& car = env_.car();
  return json{{"type", "state"},
              {"x", car.position.x},
              {"y", car.position.y},
              {"psi", car.heading},
              {"v", car.speed},
              {"reward", reward},
              {"step", env_.step_count()},
              {"recording", recording_},
              {"condition", to_string(env_.condition().preset)}}
      .dump();
}

std::vector<std::string> TeleopSession::tick() {
  if (!connected_) {
    if (episodes_ == 0 || ticks_since_disconnect_ >= hold_ticks_) {
      control_ = Action{};
      return {};
    }
    ++ticks_since_disconnect_;
  }

  if (reset_requested_ && episodes_ > 0) finish_episode(true);
  if (reset_requested_ || episodes_ == 0) start_episode();
  reset_requested_ = false;

  const Action action = control_;
  StepResult result = env_.step(action);
  const double reward = result.info.reward.r;
  episode_return_ += reward;
  if (recording_) {
    pending_.push_back({obs_, action, static_cast<float>(reward), result.obs, result.done});
    pending_telemetry_.push_back({recorded_episodes_, env_.step_count(),
                                  result.info.distance_to_obstacle, result.info.speed,
                                  static_cast<float>(reward)});
  }
  obs_ = std::move(result.obs);

  std::vector<std::string> out{state_message(reward)};
  if (result.done) {
    out.push_back(json{{"type", "episode_end"},
                       {"return", episode_return_},
                       {"steps", env_.step_count()},
                       {"collided", result.info.collided}}
                      .dump());
    finish_episode(false);
    start_episode();
  }
  return out;
}

}  // namespace drive
