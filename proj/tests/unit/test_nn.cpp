#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "drive/errors.hpp"
#include "drive/nn.hpp"
#include "drive/train_ops.hpp"
#include "layer_cases.hpp"

using namespace drive;
using namespace drive::nn;
using oracle::Case;
using oracle::build;
using oracle::inputs_for;
using oracle::layer_cases;

namespace {

constexpr double kEps = 1e-3;
constexpr double kTol = 1e-3;
constexpr int kSeeds = 20;

}  // namespace

TEST(GradientCheck, EveryLayerKindMatchesFiniteDifferences) {
  for (const Case& c : layer_cases()) {
    for (int seed = 0; seed < kSeeds; ++seed) {
      std::mt19937_64 rng(1000 + seed);
      Network<double> net = build(c, rng);
      const auto result = oracle::finite_difference_check(net, inputs_for(c, rng, 2), kEps, seed);
      EXPECT_GT(result.checked, 0u) << c.label;
      EXPECT_LT(result.max_rel_error, kTol)
          << c.label << " seed " << seed << " worst " << result.worst;
    }
  }
}

TEST(GradientCheck, HuberGradientMatchesFiniteDifferences) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(seed);
    BasicTensor<double> pred = oracle::random_tensor({4, 3}, rng, -3.0, 3.0);
    const BasicTensor<double> target = oracle::random_tensor({4, 3}, rng, -3.0, 3.0);
    const HuberConfig cfg{1.0};
    const auto analytic = huber_loss(pred, target, cfg).grad;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double saved = pred[i];
      pred[i] = saved + kEps;
      const double lp = huber_loss(pred, target, cfg).loss;
      pred[i] = saved - kEps;
      const double lm = huber_loss(pred, target, cfg).loss;
      pred[i] = saved;
      const double numeric = (lp - lm) / (2 * kEps);
      // Skip coordinates straddling the knee, where the second derivative jumps.
      if (std::abs(std::abs(saved - target[i]) - cfg.delta) < kEps) continue;
      const double rel = std::abs(numeric - analytic[i]) /
                         std::max({std::abs(numeric), std::abs(analytic[i]), 1e-8});
      EXPECT_LT(rel, kTol) << "seed " << seed << " element " << i;
    }
  }
}

TEST(GradientCheck, CorruptedBackwardIsDetected) {
  for (const Case& c : layer_cases()) {
    std::mt19937_64 rng(7);
    Network<double> reference = build(c, rng);
    Network<double> net("x", c.input_shape, {});
    for (const auto& spec : c.specs) {
      auto layer = make_layer<double>(spec);
      net.append(std::make_unique<oracle::ScaledBackward>(std::move(layer), 1.5));
    }
    auto dst = net.parameters();
    auto src = reference.parameters();
    ASSERT_EQ(dst.size(), src.size());
    for (std::size_t i = 0; i < src.size(); ++i) dst[i]->value = src[i]->value;
    const auto result = oracle::finite_difference_check(net, inputs_for(c, rng, 2), kEps, 3);
    EXPECT_GT(result.max_rel_error, 1e-1) << c.label;
  }
}

TEST(GradientCheck, LibraryHarnessAgreesWithOracle) {
  std::mt19937_64 rng(11);
  Network<double> net("x", {2, 5, 5},
                      {LayerSpec::conv2d("c", 2, 2, 1), LayerSpec::relu(),
                       LayerSpec::global_avg_pool(), LayerSpec::fully_connected("fc", 2, 2)});
  for (auto* p : net.parameters()) p->value = oracle::random_tensor(p->value.shape, rng);
  TensorMap<double> in;
  in["x"] = oracle::random_tensor({2, 2, 5, 5}, rng);
  EXPECT_LT(gradient_check(net, in, 1e-3), 1e-3);
}

TEST(Autodiff, SingleLinearUnit) {
  Network<double> net("x", {1}, {LayerSpec::fully_connected("fc", 1, 1)});
  net.find("fc.weight")->value.values = {0.7};
  net.find("fc.bias")->value.values = {0.0};
  net.forward(BasicTensor<double>({1, 1}, std::vector<double>{2.0}));
  auto grads = net.backward(BasicTensor<double>({1, 1}, std::vector<double>{1.0}));
  EXPECT_DOUBLE_EQ(grads.at("fc.weight")[0], 2.0);
  EXPECT_DOUBLE_EQ(grads.at("fc.bias")[0], 1.0);
}

TEST(Autodiff, UnusedParameterHasZeroGradient) {
  // Only output 0 enters the loss, so row 1 of the weight gets no gradient.
  Network<double> net("x", {3}, {LayerSpec::fully_connected("fc", 3, 2)});
  std::mt19937_64 rng(2);
  for (auto* p : net.parameters()) p->value = oracle::random_tensor(p->value.shape, rng);
  net.forward(oracle::random_tensor({4, 3}, rng));
  BasicTensor<double> g({4, 2});
  for (int b = 0; b < 4; ++b) g[static_cast<std::size_t>(b) * 2] = 1.0;
  auto grads = net.backward(g);
  for (int j = 0; j < 3; ++j) EXPECT_EQ(grads.at("fc.weight")[3 + j], 0.0);
  EXPECT_EQ(grads.at("fc.bias")[1], 0.0);
}

TEST(Autodiff, BackwardBeforeForwardThrows) {
  Network<double> net("x", {3}, {LayerSpec::fully_connected("fc", 3, 2)});
  EXPECT_THROW(net.backward(BasicTensor<double>({1, 2})), StateError);
}

TEST(Autodiff, ShapeMismatchThrows) {
  EXPECT_THROW(Network<double>("x", {3}, {LayerSpec::fully_connected("fc", 4, 2)}), ShapeError);
  Network<double> net("x", {3}, {LayerSpec::fully_connected("fc", 3, 2)});
  EXPECT_THROW(net.forward(BasicTensor<double>({1, 4})), ShapeError);
}

TEST(Autodiff, ForwardIsDeterministic) {
  Network<float> net("x", {1, 8, 8},
                     {LayerSpec::conv2d("c", 1, 4, 2), LayerSpec::relu(),
                      LayerSpec::residual_block("r", 4), LayerSpec::global_avg_pool()});
  Rng rng(5);
  net.init_he_uniform(rng);
  Tensor x({3, 1, 8, 8});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(std::sin(0.3 * i));
  Network<float> copy = net;
  EXPECT_EQ(net.forward(x), net.forward(x));
  EXPECT_EQ(net.forward(x), copy.forward(x));
}

TEST(Huber, ExampleCases) {
  const HuberConfig cfg{1.0};
  auto one = [&](double p, double t) {
    return huber_loss(BasicTensor<double>({1}, std::vector<double>{p}),
                      BasicTensor<double>({1}, std::vector<double>{t}), cfg)
        .loss;
  };
  EXPECT_EQ(one(0.3, 0.3), 0.0);
  EXPECT_NEAR(one(0.5, 0.0), 0.125, 1e-15);
  EXPECT_NEAR(one(2.0, 0.0), 1.5, 1e-15);
  EXPECT_NEAR(one(1.0, 0.0), 0.5, 1e-15);
}

TEST(Huber, ContinuousAtKnee) {
  for (double delta : {0.5, 1.0, 2.0}) {
    const HuberConfig cfg{delta};
    auto at = [&](double diff) {
      return huber_loss(BasicTensor<double>({1}, std::vector<double>{diff}),
                        BasicTensor<double>({1}, std::vector<double>{0.0}), cfg)
          .loss;
    };
    EXPECT_NEAR(at(delta - 1e-12), at(delta + 1e-12), 1e-7);
    EXPECT_NEAR(at(delta), 0.5 * delta * delta, 1e-15);
  }
}

TEST(Huber, MeanOverElementsMatchesOracle) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = oracle::random_tensor({5, 3}, rng, -4, 4);
    const auto t = oracle::random_tensor({5, 3}, rng, -4, 4);
    double expected = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) expected += oracle::huber_element(p[i], t[i], 1.0);
    expected /= static_cast<double>(p.size());
    const double got = huber_loss(p, t, HuberConfig{1.0}).loss;
    EXPECT_NEAR(got, expected, 1e-12);
    EXPECT_GE(got, 0.0);
  }
}

TEST(Huber, ShapeMismatchThrows) {
  EXPECT_THROW(huber_loss(BasicTensor<double>({2}), BasicTensor<double>({3}), HuberConfig{}),
               ShapeError);
}

TEST(Optimizer, SgdStepIsAnalytic) {
  Parameter<float> p;
  p.name = "w";
  p.value = Tensor({1}, std::vector<float>{1.0f});
  p.grad = Tensor({1}, std::vector<float>{0.5f});
  Optimizer sgd(Optimizer::Mode::sgd);
  sgd.step({&p}, 0.1);
  EXPECT_FLOAT_EQ(p.value[0], 0.95f);
}

TEST(Optimizer, AdamFirstStepMovesByLearningRate) {
  // After one step m_hat = g and v_hat = g^2, so the update is lr * g / (|g| + eps).
  Parameter<float> p;
  p.name = "w";
  p.value = Tensor({2}, std::vector<float>{1.0f, -2.0f});
  p.grad = Tensor({2}, std::vector<float>{0.3f, -4.0f});
  Optimizer adam;
  adam.step({&p}, 0.01);
  EXPECT_NEAR(p.value[0], 1.0 - 0.01 * 0.3 / (0.3 + 1e-8), 1e-6);
  EXPECT_NEAR(p.value[1], -2.0 + 0.01 * 4.0 / (4.0 + 1e-8), 1e-6);
}

TEST(Optimizer, FrozenAndZeroLrLeaveParametersBitwiseUnchanged) {
  Network<float> net("x", {4}, {LayerSpec::fully_connected("a", 4, 4), LayerSpec::relu(),
                                LayerSpec::fully_connected("b", 4, 2)});
  Rng rng(9);
  net.init_he_uniform(rng);
  net.find("a.weight")->frozen = true;
  net.find("a.bias")->frozen = true;
  const Network<float> before = net;
  Optimizer adam;
  Tensor x({3, 4});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(i) * 0.1f - 0.5f;
  for (int step = 0; step < 200; ++step) {
    net.forward(x);
    net.backward_in_place(Tensor({3, 2}, 1.0f));
    adam.step(net.parameters(), 1e-2);
  }
  EXPECT_EQ(net.find("a.weight")->value, before.find("a.weight")->value);
  EXPECT_EQ(net.find("a.bias")->value, before.find("a.bias")->value);
  EXPECT_NE(net.find("b.weight")->value, before.find("b.weight")->value);

  Network<float> copy = before;
  copy.forward(x);
  copy.backward_in_place(Tensor({3, 2}, 1.0f));
  Optimizer zero;
  zero.step(copy.parameters(), 0.0);
  for (auto* p : copy.parameters()) EXPECT_EQ(p->value, before.find(p->name)->value) << p->name;

  copy.forward(x);
  copy.backward_in_place(Tensor({3, 2}, 1.0f));
  Optimizer named;
  named.step(copy.parameters(), 0.1, {"b.weight", "b.bias"});
  EXPECT_EQ(copy.find("b.weight")->value, before.find("b.weight")->value);
}

TEST(Optimizer, NanGradientNamesLayer) {
  Parameter<float> p;
  p.name = "fc1.weight";
  p.value = Tensor({1}, 1.0f);
  p.grad = Tensor({1}, std::nanf(""));
  Optimizer adam;
  try {
    adam.step({&p}, 0.1);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("fc1"), std::string::npos);
  }
}
