#pragma once

// Independent reference computations for the tests. Nothing here calls the
// library routine it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "drive/nn.hpp"
#include "drive/track.hpp"

namespace oracle {

using drive::nn::BasicTensor;
using drive::nn::Layer;
using drive::nn::LayerSpec;
using drive::nn::Network;
using drive::nn::TensorMap;

inline BasicTensor<double> random_tensor(std::vector<int> shape, std::mt19937_64& rng,
                                         double lo = -1.0, double hi = 1.0) {
  BasicTensor<double> t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.values) v = u(rng);
  return t;
}

struct FdResult {
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

/// Central differences of L = sum(out * proj) against the network's reverse
/// pass, for every parameter element and every element of every input.
/// Coordinates whose perturbation changes the ReLU pattern are skipped.
inline FdResult finite_difference_check(Network<double>& net, TensorMap<double> inputs,
                                        double eps, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  BasicTensor<double> out = net.forward(inputs).at("out");
  const BasicTensor<double> proj = random_tensor(out.shape, rng);
  const std::vector<std::uint8_t> pattern = net.kink_signature();

  net.backward_in_place(proj, true);
  std::vector<std::vector<double>> param_grads;
  for (auto* p : net.parameters()) param_grads.push_back(p->grad.values);
  const TensorMap<double> input_grads = net.input_gradients();

  auto loss = [&](bool& same_pattern) {
    const BasicTensor<double> y = net.forward(inputs).at("out");
    same_pattern = net.kink_signature() == pattern;
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * proj[i];
    return s;
  };

  FdResult r;
  auto compare = [&](double analytic, double& x, const std::string& what) {
    const double saved = x;
    bool same_plus = false, same_minus = false;
    x = saved + eps;
    const double lp = loss(same_plus);
    x = saved - eps;
    const double lm = loss(same_minus);
    x = saved;
    if (!same_plus || !same_minus) {
      ++r.skipped;
      return;
    }
    const double numeric = (lp - lm) / (2.0 * eps);
    const double rel = std::abs(analytic - numeric) /
                       std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    ++r.checked;
    if (rel > r.max_rel_error) {
      r.max_rel_error = rel;
      r.worst = what;
    }
  };

  auto params = net.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (std::size_t i = 0; i < params[k]->value.size(); ++i) {
      compare(param_grads[k][i], params[k]->value.values[i], params[k]->name);
    }
  }
  for (auto& [name, tensor] : inputs) {
    auto g = input_grads.find(name);
    if (g == input_grads.end()) continue;
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      compare(g->second[i], tensor.values[i], "input:" + name);
    }
  }
  return r;
}

/// Wraps a layer and scales the incoming gradient before delegating, so every
/// gradient it produces is off by `factor`.
class ScaledBackward : public Layer<double> {
 public:
  ScaledBackward(std::unique_ptr<Layer<double>> inner, double factor)
      : Layer<double>(inner->spec()), inner_(std::move(inner)), factor_(factor) {}

  std::vector<int> output_shape(const std::vector<int>& in) const override {
    return inner_->output_shape(in);
  }
  BasicTensor<double> forward(const BasicTensor<double>& x,
                              const TensorMap<double>& inputs) override {
    return inner_->forward(x, inputs);
  }
  BasicTensor<double> backward(const BasicTensor<double>& grad_out,
                               TensorMap<double>& input_grads, bool need_dx) override {
    BasicTensor<double> g = grad_out;
    for (auto& v : g.values) v *= factor_;
    return inner_->backward(g, input_grads, need_dx);
  }
  std::vector<drive::nn::Parameter<double>*> parameters() override {
    return inner_->parameters();
  }
  std::unique_ptr<Layer<double>> clone() const override {
    return std::make_unique<ScaledBackward>(inner_->clone(), factor_);
  }
  void append_kinks(std::vector<std::uint8_t>& out) const override { inner_->append_kinks(out); }

 private:
  std::unique_ptr<Layer<double>> inner_;
  double factor_;
};

/// Per-element Huber value written out from its two branches.
inline double huber_element(double pred, double target, double delta) {
  const double a = std::abs(pred - target);
  return a <= delta ? 0.5 * a * a : delta * (a - 0.5 * delta);
}

/// Distance from `p` to the segment a-b by dense sampling of the segment.
inline double sampled_segment_distance(drive::Vec2 p, drive::Vec2 a, drive::Vec2 b, int samples) {
  double best = 1e300;
  for (int i = 0; i <= samples; ++i) {
    const double t = static_cast<double>(i) / samples;
    const double x = a.x + t * (b.x - a.x), y = a.y + t * (b.y - a.y);
    best = std::min(best, std::hypot(p.x - x, p.y - y));
  }
  return best;
}

/// Exact distance from `p` to the closed polyline, by projection onto every segment.
inline double polyline_distance(const std::vector<drive::Vec2>& pts, drive::Vec2 p) {
  double best = 1e300;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const drive::Vec2 a = pts[i], b = pts[(i + 1) % pts.size()];
    const double ex = b.x - a.x, ey = b.y - a.y;
    double t = ((p.x - a.x) * ex + (p.y - a.y) * ey) / (ex * ex + ey * ey);
    t = std::clamp(t, 0.0, 1.0);
    best = std::min(best, std::hypot(p.x - a.x - t * ex, p.y - a.y - t * ey));
  }
  return best;
}

// Brute-force clearance: centerline sampled every <= 1 mm, obstacle circles
// sampled every <= 1 mm of arc.
inline double clearance(const drive::TrackSpec& spec, drive::Vec2 p) {
  const auto& pts = spec.centerline;
  double to_center = 1e300;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const drive::Vec2 a = pts[i], b = pts[(i + 1) % pts.size()];
    const int samples = static_cast<int>(std::ceil(std::hypot(b.x - a.x, b.y - a.y) / 1e-3));
    to_center = std::min(to_center, sampled_segment_distance(p, a, b, samples));
  }
  double clearance = spec.half_width - to_center;
  for (const auto& o : spec.obstacles) {
    const int samples = static_cast<int>(std::ceil(2 * std::numbers::pi * o.radius / 1e-3));
    double boundary = 1e300;
    for (int k = 0; k < samples; ++k) {
      const double a = 2 * std::numbers::pi * k / samples;
      boundary = std::min(boundary, std::hypot(p.x - (o.center.x + o.radius * std::cos(a)),
                                               p.y - (o.center.y + o.radius * std::sin(a))));
    }
    const bool inside = std::hypot(p.x - o.center.x, p.y - o.center.y) < o.radius;
    clearance = std::min(clearance, inside ? -boundary : boundary);
  }
  return std::max(0.0, clearance);
}

inline drive::TrackSpec square_track_with_obstacles() {
  drive::TrackSpec spec;
  for (int i = 0; i < 40; ++i) spec.centerline.push_back({static_cast<double>(i), 0.0});
  for (int i = 0; i < 40; ++i) spec.centerline.push_back({40.0, static_cast<double>(i)});
  for (int i = 40; i > 0; --i) spec.centerline.push_back({static_cast<double>(i), 40.0});
  for (int i = 40; i > 0; --i) spec.centerline.push_back({0.0, static_cast<double>(i)});
  spec.half_width = 4.0;
  spec.obstacles = {{{20.0, 1.0}, 1.0}, {{40.0, 25.0}, 0.5}, {{12.0, 39.0}, 1.5}};
  return spec;
}

}  // namespace oracle
