#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "drive/nn.hpp"

namespace drive::nn {

struct HuberConfig {
  double delta = 1.0;
  void validate() const;
};

template <typename T>
struct LossResult {
  double loss = 0.0;
  BasicTensor<T> grad;  // d(loss)/d(pred)
};

/// Mean over elements of the piecewise quadratic/linear Huber penalty.
template <typename T>
LossResult<T> huber_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target,
                         const HuberConfig& cfg);

/// Mean over elements of 0.5 * (pred - target)^2.
template <typename T>
LossResult<T> squared_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target);

/// Adam (beta1 0.9, beta2 0.999, eps 1e-8) with a plain-SGD mode. State is
/// keyed by parameter name.
class Optimizer {
 public:
  enum class Mode { adam, sgd };

  explicit Optimizer(Mode mode = Mode::adam) : mode_(mode) {}

  /// Updates every parameter that is neither flagged frozen nor named in
  /// `frozen`, using the gradient stored in the parameter. Throws
  /// NumericError naming the layer on a non-finite gradient.
  void step(const std::vector<Parameter<float>*>& params, double lr,
            const std::set<std::string>& frozen = {});

  Mode mode() const { return mode_; }
  long long step_count() const { return t_; }

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

 private:
  struct Moments {
    std::vector<float> m;
    std::vector<float> v;
  };
  Mode mode_;
  long long t_ = 0;
  std::map<std::string, Moments> state_;
};

/// Central finite-difference check of every parameter of `net` against the
/// analytic reverse pass, on the scalar loss sum(out * projection). Returns
/// the maximum relative error
///   |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
/// Parameters whose perturbation flips a ReLU activation are skipped, since
/// the loss is not differentiable across the kink.
struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t checked = 0;
  std::size_t skipped_at_kinks = 0;
};

GradientCheckResult gradient_check_detailed(Network<double>& net, const TensorMap<double>& inputs,
                                            double eps, std::uint64_t projection_seed = 1);
double gradient_check(Network<double>& net, const TensorMap<double>& inputs, double eps);

}  // namespace drive::nn
