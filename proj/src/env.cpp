#include "drive/env.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "drive/errors.hpp"

namespace drive {

CarState step_dynamics(const CarState& car, const Action& action, double dt,
                       const DynamicsConfig& dyn) {
  CarState next = car;
  // Positive steering is a right (clockwise) turn, so it lowers the heading.
  const double steer_angle = dyn.max_steer * static_cast<double>(action.steering);
  next.heading = car.heading - (car.speed / dyn.wheelbase) * std::tan(steer_angle) * dt;
  const double accel = dyn.throttle_accel * action.throttle - dyn.brake_decel * action.brake -
                       dyn.drag * car.speed;
  next.speed = std::clamp(car.speed + accel * dt, 0.0, dyn.max_speed);
  next.position.x = car.position.x + next.speed * std::cos(next.heading) * dt;
  next.position.y = car.position.y + next.speed * std::sin(next.heading) * dt;
  return next;
}

std::string to_string(ConditionPreset preset) {
  switch (preset) {
    case ConditionPreset::clear: return "clear";
    case ConditionPreset::rain: return "rain";
    case ConditionPreset::fog: return "fog";
    case ConditionPreset::dusk: return "dusk";
  }
  return "unknown";
}

ConditionPreset preset_from_string(const std::string& name) {
  for (auto p : kAllPresets) {
    if (to_string(p) == name) return p;
  }
  throw ConfigError("unknown condition preset '" + name + "'");
}

void Condition::validate() const {
  if (!(brightness_scale >= 0.4 && brightness_scale <= 1.2)) {
    throw ConfigError("condition: brightness_scale outside [0.4, 1.2]");
  }
  if (!(noise_sigma >= 0.0 && noise_sigma <= 0.1)) {
    throw ConfigError("condition: noise_sigma outside [0, 0.1]");
  }
  if (blur_radius < 0 || blur_radius > 2) throw ConfigError("condition: blur_radius not in {0,1,2}");
}

namespace {

struct PresetRanges {
  double brightness_lo, brightness_hi;
  double noise_lo, noise_hi;
  int blur_lo, blur_hi;
};

PresetRanges ranges_for(ConditionPreset preset) {
  switch (preset) {
    case ConditionPreset::clear: return {0.95, 1.2, 0.0, 0.02, 0, 0};
    case ConditionPreset::rain: return {0.6, 0.85, 0.05, 0.1, 0, 1};
    case ConditionPreset::fog: return {0.85, 1.1, 0.02, 0.05, 1, 2};
    case ConditionPreset::dusk: return {0.4, 0.6, 0.01, 0.04, 0, 1};
  }
  return {1.0, 1.0, 0.0, 0.0, 0, 0};
}

}  // namespace

Condition sample_condition(Rng& rng, ConditionPreset preset) {
  const auto r = ranges_for(preset);
  Condition c;
  c.preset = preset;
  c.brightness_scale = uniform(rng, r.brightness_lo, r.brightness_hi);
  c.noise_sigma = uniform(rng, r.noise_lo, r.noise_hi);
  c.blur_radius = r.blur_lo + static_cast<int>(uniform_index(rng, r.blur_hi - r.blur_lo + 1));
  return c;
}

Condition sample_condition(Rng& rng) {
  const auto preset = kAllPresets[uniform_index(rng, kAllPresets.size())];
  return sample_condition(rng, preset);
}

std::vector<float> render_clean(const Track& track, const CarState& car,
                                const RenderConfig& render) {
  const int n = render.image_hw;
  const double px = render.window_m / n;
  const double half_diag = render.window_m * std::sqrt(0.5);
  const double hw = track.half_width();
  const auto segments = track.segments_near(car.position, half_diag + hw + 1.0);
  const Vec2 fwd{std::cos(car.heading), std::sin(car.heading)};
  const Vec2 right{std::sin(car.heading), -std::cos(car.heading)};
  auto world = [&](int r, int c) {
    const double f = (n / 2.0 - r - 0.5) * px;
    const double s = (c + 0.5 - n / 2.0) * px;
    return car.position + f * fwd + s * right;
  };

  // Road mask: a pixel is road when any nearby segment lies within the half
  // width. Each segment only visits the pixels of its padded bounding box.
  std::vector<std::uint8_t> road(static_cast<std::size_t>(n) * n, 0);
  const auto& pts = track.spec().centerline;
  const std::size_t count = pts.size();
  for (std::size_t i : segments) {
    const Vec2 a = pts[i];
    const Vec2 b = pts[(i + 1) % count];
    const Vec2 ab = b - a;
    const double len2 = dot(ab, ab);
    double r_lo = n, r_hi = -1, c_lo = n, c_hi = -1;
    for (const Vec2 q : {a, b}) {
      const Vec2 d = q - car.position;
      const double r = n / 2.0 - 0.5 - dot(d, fwd) / px;
      const double c = dot(d, right) / px + n / 2.0 - 0.5;
      r_lo = std::min(r_lo, r);
      r_hi = std::max(r_hi, r);
      c_lo = std::min(c_lo, c);
      c_hi = std::max(c_hi, c);
    }
    const double pad = hw / px + 1.0;
    const int r0 = std::max(0, static_cast<int>(std::floor(r_lo - pad)));
    const int r1 = std::min(n - 1, static_cast<int>(std::ceil(r_hi + pad)));
    const int c0 = std::max(0, static_cast<int>(std::floor(c_lo - pad)));
    const int c1 = std::min(n - 1, static_cast<int>(std::ceil(c_hi + pad)));
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        std::uint8_t& m = road[static_cast<std::size_t>(r) * n + c];
        if (m) continue;
        const Vec2 p = world(r, c);
        const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
        const double dx = p.x - (a.x + t * ab.x);
        const double dy = p.y - (a.y + t * ab.y);
        m = std::sqrt(dx * dx + dy * dy) <= hw;
      }
    }
  }

  std::vector<float> image(static_cast<std::size_t>(n) * n);
  for (int r = 0; r < n; ++r) {
    const double f = (n / 2.0 - r - 0.5) * px;
    for (int c = 0; c < n; ++c) {
      const double s = (c + 0.5 - n / 2.0) * px;
      const std::size_t idx = static_cast<std::size_t>(r) * n + c;
      double value = road[idx] ? render.road_value : render.offroad_value;
      if (std::abs(f) <= render.car_length / 2 && std::abs(s) <= render.car_width / 2) {
        value = render.car_value;
      } else {
        const Vec2 p = world(r, c);
        for (const auto& o : track.spec().obstacles) {
          if (norm(p - o.center) <= o.radius) value = render.obstacle_value;
        }
      }
      image[idx] = static_cast<float>(value);
    }
  }
  return image;
}

std::vector<float> render_observation(const Track& track, const CarState& car,
                                      const Condition& condition, Rng& noise_rng,
                                      const RenderConfig& render) {
  std::vector<float> image = render_clean(track, car, render);
  for (auto& v : image) {
    v = static_cast<float>(std::min(1.0, static_cast<double>(v) * condition.brightness_scale));
  }
  if (condition.noise_sigma > 0.0) {
    for (auto& v : image) {
      const double noisy = v + condition.noise_sigma * standard_normal(noise_rng);
      v = static_cast<float>(std::clamp(noisy, 0.0, 1.0));
    }
  }
  if (condition.blur_radius > 0) {
    const int n = render.image_hw;
    const int k = condition.blur_radius;
    std::vector<float> blurred(image.size());
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        double sum = 0.0;
        int count = 0;
        for (int dr = -k; dr <= k; ++dr) {
          const int rr = r + dr;
          if (rr < 0 || rr >= n) continue;
          for (int dc = -k; dc <= k; ++dc) {
            const int cc = c + dc;
            if (cc < 0 || cc >= n) continue;
            sum += image[static_cast<std::size_t>(rr) * n + cc];
            ++count;
          }
        }
        blurred[static_cast<std::size_t>(r) * n + c] =
            static_cast<float>(std::clamp(sum / count, 0.0, 1.0));
      }
    }
    image = std::move(blurred);
  }
  return image;
}

void EpisodeConfig::validate() const {
  if (max_steps < 1) throw ConfigError("episode: max_steps must be >= 1");
  if (!(dt > 0.0)) throw ConfigError("episode: dt must be positive");
}

DrivingEnv::DrivingEnv(std::shared_ptr<const Track> track, EpisodeConfig episode,
                       RewardConfig reward, DynamicsConfig dynamics, RenderConfig render)
    : track_(std::move(track)),
      episode_(episode),
      reward_(reward),
      dynamics_(dynamics),
      render_(render) {
  if (!track_) throw ConfigError("env: track is required");
  episode_.validate();
  reward_.validate();
}

Observation DrivingEnv::reset(std::uint64_t seed, std::optional<ConditionPreset> preset) {
  Rng start_rng = make_rng(seed, "start");
  Rng condition_rng = make_rng(seed, "condition");
  render_rng_ = make_rng(seed, "render");

  const double s = episode_.randomize_start ? uniform(start_rng, 0.0, track_->length()) : 0.0;
  car_ = CarState{track_->point_at(s), track_->heading_at(s), 0.0};
  if (preset) {
    condition_ = sample_condition(condition_rng, *preset);
  } else if (episode_.randomize_condition) {
    condition_ = sample_condition(condition_rng);
  } else {
    condition_ = Condition{};
  }
  steps_ = 0;
  done_ = false;
  started_ = true;
  return observe();
}

Observation DrivingEnv::observe() {
  Observation obs;
  obs.height = render_.image_hw;
  obs.width = render_.image_hw;
  obs.image = render_observation(*track_, car_, condition_, render_rng_, render_);
  obs.speed = static_cast<float>(car_.speed);
  return obs;
}

StepResult DrivingEnv::step(const Action& action) {
  if (!started_) throw StateError("env: step before reset");
  if (done_) throw StateError("env: step after the episode ended");
  action.validate();
  car_ = step_dynamics(car_, action, episode_.dt, dynamics_);
  ++steps_;

  StepResult out;
  const double clearance = signed_clearance(*track_, car_.position);
  out.info.collided = clearance <= 0.0;
  out.info.distance_to_obstacle = std::max(0.0, clearance);
  out.info.speed = static_cast<double>(static_cast<float>(car_.speed));
  out.info.reward = compute_reward(out.info.distance_to_obstacle, out.info.speed, reward_);
  done_ = out.info.collided || steps_ >= episode_.max_steps;
  out.done = done_;
  out.obs = observe();
  return out;
}

}  // namespace drive
