#include "drive/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <functional>
#include <numeric>
#include <set>

#include "drive/errors.hpp"

namespace drive {

namespace {

bool in_range(float value, float lo, float hi) {
  return std::isfinite(value) && value >= lo && value <= hi;
}

}  // namespace

void Observation::validate() const {
  if (height <= 0 || width <= 0) {
    throw ValidationError("observation: non-positive image size");
  }
  if (image.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
    throw ValidationError("observation: image has " + std::to_string(image.size()) +
                          " values, expected " + std::to_string(height * width));
  }
  for (float v : image) {
    if (!in_range(v, 0.0F, 1.0F)) {
      throw ValidationError("observation: image value outside [0,1]");
    }
  }
  if (!std::isfinite(speed) || speed < 0.0F) {
    throw ValidationError("observation: speed must be finite and non-negative");
  }
}

void Action::validate() const {
  if (!in_range(throttle, 0.0F, 1.0F)) throw ValidationError("action: throttle outside [0,1]");
  if (!in_range(brake, 0.0F, 1.0F)) throw ValidationError("action: brake outside [0,1]");
  if (!in_range(steering, -1.0F, 1.0F)) throw ValidationError("action: steering outside [-1,1]");
}

Action Action::clamped(double throttle, double brake, double steering) {
  auto clamp_finite = [](double v, double lo, double hi) {
    if (!std::isfinite(v)) return 0.0;
    return std::clamp(v, lo, hi);
  };
  return Action{static_cast<float>(clamp_finite(throttle, 0.0, 1.0)),
                static_cast<float>(clamp_finite(brake, 0.0, 1.0)),
                static_cast<float>(clamp_finite(steering, -1.0, 1.0))};
}

void Transition::validate() const {
  obs.validate();
  action.validate();
  if (!in_range(reward, 0.0F, 1.0F)) {
    throw ValidationError("transition: reward outside [0,1]");
  }
  next_obs.validate();
  if (obs.height != next_obs.height || obs.width != next_obs.width) {
    throw ValidationError("transition: obs and next_obs resolutions differ");
  }
}

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
  auto it = std::find_if(entries.begin(), entries.end(),
                         [&](const CheckpointEntry& e) { return e.name == name; });
  return it == entries.end() ? nullptr : &*it;
}

void Checkpoint::validate() const {
  std::set<std::string> names;
  for (const auto& e : entries) {
    if (!names.insert(e.name).second) {
      throw FormatError("checkpoint: duplicate layer name '" + e.name + "'");
    }
    std::size_t count = 1;
    for (int d : e.shape) {
      if (d < 0) throw FormatError("checkpoint: negative dimension in '" + e.name + "'");
      count *= static_cast<std::size_t>(d);
    }
    if (count != e.values.size()) {
      throw FormatError("checkpoint: shape of '" + e.name + "' implies " + std::to_string(count) +
                        " values, found " + std::to_string(e.values.size()));
    }
  }
}

std::string reproducible_timestamp() {
  std::time_t t = 0;
  if (const char* env = std::getenv("SOURCE_DATE_EPOCH"); env != nullptr && *env != '\0') {
    t = static_cast<std::time_t>(std::strtoll(env, nullptr, 10));
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace drive
