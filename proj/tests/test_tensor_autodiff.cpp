// Copyright 2026 The IIANet-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "iianet/autodiff.hpp"

namespace iianet {
namespace {

Tensor<double> random_tensor(Shape s, std::mt19937_64& rng, double lo = -2, double hi = 2) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(std::move(s));
  for (auto& v : t.storage()) v = u(rng);
  return t;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3}); }

TEST(Tensor, RejectsBadShapesAndNonFiniteData) {
  EXPECT_THROW(Tensor<float>(Shape{2, 0}), ShapeError);
  EXPECT_THROW(Tensor<float>(Shape{2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
  EXPECT_THROW(Tensor<float>(Shape{2}, std::vector<float>{1, std::numeric_limits<float>::quiet_NaN()}), NonFiniteError);
  EXPECT_THROW(Tensor<double>(Shape{1}, std::vector<double>{std::numeric_limits<double>::infinity()}), NonFiniteError);
  Tensor<float> t(Shape{2, 3});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.channels(), 2u);
  EXPECT_EQ(t.length(), 3u);
}

TEST(Autodiff, AddIsComponentwise) {
  Tape<float> tape;
  auto a = tape.leaf(Tensor<float>(Shape{1, 2}, {1, 2}), "a");
  auto b = tape.leaf(Tensor<float>(Shape{1, 2}, {3, 4}), "b");
  auto c = ew_add(a, b);
  EXPECT_EQ(c.value(), Tensor<float>(Shape{1, 2}, {4, 6}));
  auto g = tape.backward(sum(c));
  EXPECT_EQ(g.at("a"), Tensor<float>::ones({1, 2}));
  EXPECT_EQ(g.at("b"), Tensor<float>::ones({1, 2}));
}

TEST(Autodiff, AddZeroIsIdentity) {
  Tape<float> tape;
  Tensor<float> x(Shape{2, 3}, {1, -2, 3, 4, 5.5f, -6});
  EXPECT_EQ(ew_add(tape.constant(x), tape.constant(Tensor<float>::zeros({2, 3}))).value(), x);
}

TEST(Autodiff, BroadcastAlongTimeSumsGradient) {
  Tape<double> tape;
  auto a = tape.leaf(Tensor<double>(Shape{2, 3}, {1, 2, 3, 4, 5, 6}), "a");
  auto b = tape.leaf(Tensor<double>(Shape{2, 1}, {10, 20}), "b");
  auto c = ew_add(a, b);
  EXPECT_EQ(c.value(), Tensor<double>(Shape{2, 3}, {11, 12, 13, 24, 25, 26}));
  auto g = tape.backward(sum(c));
  EXPECT_EQ(g.at("b"), Tensor<double>(Shape{2, 1}, {3, 3}));
}

TEST(Autodiff, RejectsUnsupportedBroadcast) {
  Tape<double> tape;
  auto a = tape.constant(Tensor<double>::ones({2, 3}));
  EXPECT_THROW(ew_add(a, tape.constant(Tensor<double>::ones({3, 3}))), ShapeError);
  EXPECT_THROW(ew_mul(a, tape.constant(Tensor<double>::ones({2, 2}))), ShapeError);
  EXPECT_THROW(ew_sub(a, tape.constant(Tensor<double>::ones({2, 1}))), ShapeError);
}

TEST(Autodiff, MulProductRule) {
  Tape<float> tape;
  auto a = tape.leaf(Tensor<float>::scalar(2), "a");
  auto b = tape.leaf(Tensor<float>::scalar(3), "b");
  auto c = ew_mul(a, b);
  EXPECT_EQ(c.value().item(), 6.0f);
  auto g = tape.backward(c);
  EXPECT_EQ(g.at("a").item(), 3.0f);
  EXPECT_EQ(g.at("b").item(), 2.0f);
}

TEST(Autodiff, MulByOnesIsIdentity) {
  Tape<float> tape;
  Tensor<float> x(Shape{1, 4}, {1, -2, 3.25f, 0});
  EXPECT_EQ(ew_mul(tape.constant(x), tape.constant(Tensor<float>::ones({1, 4}))).value(), x);
}

TEST(Autodiff, SigmoidValuesRangeAndSlope) {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>(Shape{1, 5}, {0, -800, 800, -3, 3}), "x");
  auto y = sigmoid(x);
  EXPECT_EQ(y.value()[0], 0.5);
  for (double v : y.value().data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    EXPECT_TRUE(std::isfinite(v));
  }
  EXPECT_NEAR(y.value()[3] + y.value()[4], 1.0, 1e-15);
  Tensor<double> w(Shape{1, 5}, {1, 0, 0, 0, 0});
  auto g = tape.backward(weighted_sum(y, w));
  EXPECT_EQ(g.at("x")[0], 0.25);
}

TEST(Autodiff, SigmoidStaysStrictlyInsideUnitIntervalForModerateInputs) {
  Tape<float> tape;
  auto y = sigmoid(tape.constant(Tensor<float>(Shape{1, 3}, {-15, 0.1f, 15})));
  for (float v : y.value().data()) {
    EXPECT_GT(v, 0.0f);
    EXPECT_LT(v, 1.0f);
  }
}

TEST(Autodiff, ReluValuesAndSubgradientAtZero) {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>(Shape{1, 3}, {-1, 2, 0}), "x");
  auto y = relu(x);
  EXPECT_EQ(y.value(), Tensor<double>(Shape{1, 3}, {0, 2, 0}));
  auto g = tape.backward(sum(y));
  EXPECT_EQ(g.at("x"), Tensor<double>(Shape{1, 3}, {0, 1, 0}));
}

TEST(Autodiff, ReluGradientMatchesFiniteDifferencesAwayFromZero) {
  std::mt19937_64 rng(3);
  auto x0 = random_tensor({2, 10}, rng);
  for (auto& v : x0.storage())
    if (std::abs(v) < 1e-3) v = 0.5;
  auto w = random_tensor({2, 10}, rng);
  Tape<double> tape;
  auto g = tape.backward(weighted_sum(relu(tape.leaf(x0, "x")), w)).at("x");
  auto num = finite_difference_grad(
      [&](const Tensor<double>& x) {
        Tape<double> t;
        return weighted_sum(relu(t.constant(x)), w).value().item();
      },
      x0, 1e-5);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_LT(rel_err(g[i], num[i]), 1e-6);
}

TEST(Autodiff, BackwardOfLinearScale) {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>(Shape{1, 2}, {1, 1}), "x");
  auto g = tape.backward(sum(scale(x, 2.0)));
  EXPECT_EQ(g.at("x"), Tensor<double>(Shape{1, 2}, {2, 2}));
}

TEST(Autodiff, ChainRuleThroughSigmoidAtZero) {
  Tape<double> tape;
  auto w = tape.leaf(Tensor<double>::scalar(0), "w");
  auto x = tape.constant(Tensor<double>::scalar(1));
  auto g = tape.backward(sigmoid(ew_mul(w, x)));
  EXPECT_DOUBLE_EQ(g.at("w").item(), 0.25);
}

TEST(Autodiff, BackwardRejectsNonScalarRoot) {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>::ones({1, 2}), "x");
  EXPECT_THROW(tape.backward(x), ShapeError);
}

TEST(Autodiff, UnreachedLeavesGetZeroGradients) {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>::ones({1, 2}), "x");
  tape.leaf(Tensor<double>::ones({2, 2}), "unused");
  auto g = tape.backward(sum(x));
  EXPECT_EQ(g.at("unused"), Tensor<double>::zeros({2, 2}));
}

TEST(Autodiff, FanOutAccumulates) {
  // f = sum(x*x + 3x) -> df/dx = 2x + 3
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>(Shape{1, 3}, {1, -2, 0.5}), "x");
  auto f = sum(ew_add(ew_mul(x, x), scale(x, 3.0)));
  auto g = tape.backward(f);
  EXPECT_EQ(g.at("x"), Tensor<double>(Shape{1, 3}, {5, -1, 4}));
}

TEST(Autodiff, NonFiniteOutputIsReportedWithOpName) {
  Tape<float> tape;
  auto big = tape.constant(Tensor<float>::scalar(3e38f));
  try {
    ew_add(big, big);
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("ew_add"), std::string::npos);
  }
}

TEST(FiniteDifference, QuadraticAndLinear) {
  auto g = finite_difference_grad([](const Tensor<double>& x) { return x[0] * x[0]; },
                                  Tensor<double>(Shape{1}, {3.0}), 1e-5);
  EXPECT_NEAR(g[0], 6.0, 1e-8);
  for (double eps : {1e-1, 1e-3, 1e-6}) {
    auto gl = finite_difference_grad([](const Tensor<double>& x) { return 4 * x[0] - 2 * x[1]; },
                                     Tensor<double>(Shape{2}, {0.25, -0.5}), eps);
    EXPECT_NEAR(gl[0], 4.0, 1e-9);
    EXPECT_NEAR(gl[1], -2.0, 1e-9);
  }
  EXPECT_THROW(finite_difference_grad([](const Tensor<double>&) { return 0.0; }, Tensor<double>::ones({1}), 0.0),
               Error);
}

TEST(FiniteDifference, AgreesWithBackwardOnThreeLayerComposite) {
  std::mt19937_64 rng(11);
  auto x0 = random_tensor({2, 5}, rng);
  auto w1 = random_tensor({2, 5}, rng), w2 = random_tensor({2, 1}, rng), w3 = random_tensor({2, 5}, rng);
  auto f = [&](Tape<double>& t, Var<double> x) {
    auto h1 = sigmoid(ew_mul(x, t.constant(w1)));
    auto h2 = ew_add(h1, t.constant(w2));
    return weighted_sum(sigmoid(ew_mul(h2, h2)), w3);
  };
  Tape<double> tape;
  auto g = tape.backward(f(tape, tape.leaf(x0, "x"))).at("x");
  auto num = finite_difference_grad(
      [&](const Tensor<double>& x) {
        Tape<double> t;
        return f(t, t.constant(x)).value().item();
      },
      x0, 1e-5);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_LT(rel_err(g[i], num[i]), 1e-6) << i;
}

// Property: every differentiable tensor op matches central differences on
// random inputs in [-2, 2].
TEST(AutodiffProperty, ElementwiseOpsMatchFiniteDifferences) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t c = 1 + trial % 3, l = 2 + trial % 5;
    auto a0 = random_tensor({c, l}, rng), b0 = random_tensor({c, 1}, rng), w = random_tensor({c, l}, rng);
    auto build = [&](Tape<double>&, Var<double> a, Var<double> b) {
      auto y = ew_sub(ew_mul(sigmoid(a), ew_add(a, b)), scale(a, 0.3));
      return weighted_sum(slice_channels(trim_time(pad_time(y, l + 2), l), 0, c), w);
    };
    Tape<double> tape;
    auto g = tape.backward(build(tape, tape.leaf(a0, "a"), tape.leaf(b0, "b")));
    auto num_a = finite_difference_grad(
        [&](const Tensor<double>& a) {
          Tape<double> t;
          return build(t, t.constant(a), t.constant(b0)).value().item();
        },
        a0, 1e-5);
    auto num_b = finite_difference_grad(
        [&](const Tensor<double>& b) {
          Tape<double> t;
          return build(t, t.constant(a0), t.constant(b)).value().item();
        },
        b0, 1e-5);
    for (std::size_t i = 0; i < a0.size(); ++i) EXPECT_LT(rel_err(g.at("a")[i], num_a[i]), 1e-6);
    for (std::size_t i = 0; i < b0.size(); ++i) EXPECT_LT(rel_err(g.at("b")[i], num_b[i]), 1e-6);
  }
}

TEST(AutodiffProperty, ReplayIsBitIdentical) {
  std::mt19937_64 rng(5);
  auto x0 = random_tensor({3, 7}, rng), w = random_tensor({3, 7}, rng);
  auto run = [&] {
    Tape<double> t;
    auto x = t.leaf(x0, "x");
    auto y = weighted_sum(sigmoid(ew_mul(x, x)), w);
    auto g = t.backward(y);
    return std::make_pair(y.value().item(), g.at("x"));
  };
  auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

}  // namespace
}  // namespace iianet
