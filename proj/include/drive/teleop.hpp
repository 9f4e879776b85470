#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "drive/env.hpp"
#include "drive/types.hpp"

namespace drive {

struct TeleopConfig {
  int port = 8731;
  int tick_ms = 50;
  int hold_ticks = 10;  // ticks the last control is held after a disconnect
};

/// The simulation side of a teleoperation link, free of any networking.
/// Messages are JSON text; tick() advances the simulation by at most one step
/// and returns the frames to send.
class TeleopSession {
 public:
  /// Episode k is reset with derive_seed(seed, k). An empty `out_path`
  /// disables file output.
  TeleopSession(DrivingEnv env, std::filesystem::path out_path, std::uint64_t seed,
                int hold_ticks = 10);

  /// {"type":"hello"} with the track geometry, sent once per connection.
  std::string hello_message() const;

  /// Applies a control or reset message. Returns an error frame for anything
  /// malformed; the session is left unchanged in that case.
  std::optional<std::string> handle_message(const std::string& text);

  void connect();
  void disconnect();
  bool connected() const { return connected_; }

  /// One fixed-timestep tick: applies the latest control, steps, and returns
  /// a state frame (plus an episode_end frame when the episode finished).
  /// Returns nothing while idle.
  std::vector<std::string> tick();

  /// The control applied on the next tick.
  const Action& control() const { return control_; }
  /// Recording state of the running episode.
  bool recording() const { return recording_; }
  bool recording_requested() const { return requested_recording_; }
  const DrivingEnv& env() const { return env_; }
  int episodes_started() const { return episodes_; }
  /// Transitions of finished recorded episodes, in file order.
  const std::vector<Transition>& recorded() const { return recorded_; }
  int recorded_episodes() const { return recorded_episodes_; }

 private:
  void start_episode();
  void finish_episode(bool truncated);
  std::string state_message(double reward) const;

  DrivingEnv env_;
  std::filesystem::path out_path_;
  std::uint64_t seed_;
  int hold_ticks_;

  Action control_;
  bool requested_recording_ = false;
  bool recording_ = false;
  bool connected_ = false;
  bool reset_requested_ = false;
  int ticks_since_disconnect_ = 0;
  int episodes_ = 0;
  double episode_return_ = 0.0;
  Observation obs_;

  struct TelemetryRow {
    int episode;
    int step;
    double d;
    double v;
    float reward;
  };
  std::vector<Transition> pending_;
  std::vector<TelemetryRow> pending_telemetry_;
  std::vector<Transition> recorded_;
  std::vector<TelemetryRow> telemetry_;
  int recorded_episodes_ = 0;
};

/// Websocket front end for one TeleopSession. A single driver is accepted at
/// a time; further connections receive an error frame and are closed.
class TeleopServer {
 public:
  /// Port 0 binds an ephemeral port; see port().
  TeleopServer(TeleopSession& session, unsigned short port, int tick_ms);
  ~TeleopServer();
  TeleopServer(const TeleopServer&) = delete;
  TeleopServer& operator=(const TeleopServer&) = delete;

  unsigned short port() const;
  /// Serves until stop() is called, until SIGINT/SIGTERM when
  /// `handle_signals` is set, or until `finished` returns true after a tick.
  void run(bool handle_signals = false, std::function<bool()> finished = {});
  /// Thread-safe.
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace drive
