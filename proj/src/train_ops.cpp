#include "drive/train_ops.hpp"

#include <algorithm>
#include <cmath>

namespace drive::nn {

void HuberConfig::validate() const {
  if (!(delta > 0.0) || !std::isfinite(delta)) throw ConfigError("huber: delta must be > 0");
}

template <typename T>
LossResult<T> huber_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target,
                         const HuberConfig& cfg) {
  cfg.validate();
  if (pred.shape != target.shape) {
    throw ShapeError("huber_loss: pred " + shape_string(pred.shape) + " vs target " +
                     shape_string(target.shape));
  }
  LossResult<T> r;
  r.grad = BasicTensor<T>(pred.shape);
  if (pred.size() == 0) return r;
  const double n = static_cast<double>(pred.size());
  const double delta = cfg.delta;
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    const double a = std::abs(e);
    if (a <= delta) {
      sum += 0.5 * e * e;
      r.grad[i] = static_cast<T>(e / n);
    } else {
      sum += delta * (a - 0.5 * delta);
      r.grad[i] = static_cast<T>((e > 0 ? delta : -delta) / n);
    }
  }
  r.loss = sum / n;
  return r;
}

template <typename T>
LossResult<T> squared_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
  if (pred.shape != target.shape) {
    throw ShapeError("squared_loss: pred " + shape_string(pred.shape) + " vs target " +
                     shape_string(target.shape));
  }
  LossResult<T> r;
  r.grad = BasicTensor<T>(pred.shape);
  if (pred.size() == 0) return r;
  const double n = static_cast<double>(pred.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    sum += 0.5 * e * e;
    r.grad[i] = static_cast<T>(e / n);
  }
  r.loss = sum / n;
  return r;
}

template LossResult<float> huber_loss(const Tensor&, const Tensor&, const HuberConfig&);
template LossResult<double> huber_loss(const BasicTensor<double>&, const BasicTensor<double>&,
                                       const HuberConfig&);
template LossResult<float> squared_loss(const Tensor&, const Tensor&);
template LossResult<double> squared_loss(const BasicTensor<double>&, const BasicTensor<double>&);

void Optimizer::step(const std::vector<Parameter<float>*>& params, double lr,
                     const std::set<std::string>& frozen) {
  for (const auto* p : params) {
    if (p->frozen || frozen.contains(p->name)) continue;
    for (float g : p->grad.values) {
      if (!std::isfinite(g)) throw NumericError("optimizer: non-finite gradient in '" + p->name + "'");
    }
  }
  ++t_;
  const double bias1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  for (auto* p : params) {
    if (p->frozen || frozen.contains(p->name)) continue;
    auto& w = p->value.values;
    const auto& g = p->grad.values;
    if (mode_ == Mode::sgd) {
      for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = static_cast<float>(static_cast<double>(w[i]) - lr * static_cast<double>(g[i]));
      }
      continue;
    }
    auto& st = state_[p->name];
    if (st.m.size() != w.size()) {
      st.m.assign(w.size(), 0.0F);
      st.v.assign(w.size(), 0.0F);
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      const double m = kBeta1 * st.m[i] + (1.0 - kBeta1) * gi;
      const double v = kBeta2 * st.v[i] + (1.0 - kBeta2) * gi * gi;
      st.m[i] = static_cast<float>(m);
      st.v[i] = static_cast<float>(v);
      const double update = lr * (m / bias1) / (std::sqrt(v / bias2) + kEpsilon);
      w[i] = static_cast<float>(static_cast<double>(w[i]) - update);
    }
  }
}

GradientCheckResult gradient_check_detailed(Network<double>& net, const TensorMap<double>& inputs,
                                            double eps, std::uint64_t projection_seed) {
  BasicTensor<double> out = net.forward(inputs).at("out");
  Rng rng(projection_seed);
  BasicTensor<double> projection(out.shape);
  for (auto& v : projection.values) v = uniform(rng, -1.0, 1.0);

  auto loss_at = [&]() {
    const auto y = net.forward(inputs).at("out");
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * projection[i];
    return s;
  };

  net.forward(inputs);
  const auto base_kinks = net.kink_signature();
  net.backward_in_place(projection, false);

  GradientCheckResult result;
  for (auto* p : net.parameters()) {
    if (p->frozen) continue;
    const BasicTensor<double> analytic = p->grad;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + eps;
      const double plus = loss_at();
      const bool kink_plus = net.kink_signature() != base_kinks;
      p->value[i] = saved - eps;
      const double minus = loss_at();
      const bool kink_minus = net.kink_signature() != base_kinks;
      p->value[i] = saved;
      if (kink_plus || kink_minus) {
        ++result.skipped_at_kinks;
        continue;
      }
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++result.checked;
      if (rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_parameter = p->name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

double gradient_check(Network<double>& net, const TensorMap<double>& inputs, double eps) {
  return gradient_check_detailed(net, inputs, eps).max_relative_error;
}

}  // namespace drive::nn
