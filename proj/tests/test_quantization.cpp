// Copyright 2026 The TTQ Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "test_util.hpp"
#include "ttq/errors.hpp"
#include "ttq/quantization.hpp"

namespace ttq {
namespace {

using testing::random_tensor;

TernaryPartition part(std::vector<std::int8_t> s) {
  const std::size_t n = s.size();
  return TernaryPartition(Shape{n}, std::move(s));
}

TEST(Normalize, ScalesByMaxAbs) {
  EXPECT_EQ(normalize_weights(Tensor::vector({0.5, -1.0, 0.25})).values(),
            (std::vector<double>{0.5, -1.0, 0.25}));
  EXPECT_EQ(normalize_weights(Tensor::vector({2, -4, 1})).values(),
            (std::vector<double>{0.5, -1.0, 0.25}));
  EXPECT_THROW(normalize_weights(Tensor(Shape{3})), DegenerateWeightsError);
}

TEST(Normalize, RandomTensorsReachExactlyOne) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor w = random_tensor({1 + rng.index(40)}, rng, -3, 3);
    EXPECT_EQ(normalize_weights(w).max_abs(), 1.0);
  }
}

TEST(Threshold, ConstantFactor) {
  const Tensor w = Tensor::vector({-1.0, 0.3, 0.02});
  EXPECT_DOUBLE_EQ(compute_threshold(w, ConstantFactor{0.05}), 0.05);
}

TEST(Threshold, ConstantSparsityZeroIsBinary) {
  Rng rng(2);
  const Tensor w = normalize_weights(random_tensor({30}, rng));
  const double delta = compute_threshold(w, ConstantSparsity{0.0});
  EXPECT_EQ(ttq_partition(w, delta).count_zero(), 0u);
}

TEST(Threshold, ConstantSparsityHalf) {
  const Tensor w = Tensor::vector({0.1, -0.2, 0.3, -0.4});
  const double delta = compute_threshold(w, ConstantSparsity{0.5});
  EXPECT_DOUBLE_EQ(delta, 0.2);
  EXPECT_DOUBLE_EQ(ttq_partition(w, delta).sparsity(), 0.5);
}

// Brute force: the smallest achievable zero fraction >= r over every candidate cut.
TEST(Threshold, ConstantSparsityMatchesBruteForce) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.index(60);
    const Tensor w = random_tensor({n}, rng, -1, 1);
    const double r = rng.uniform(0.0, 0.95);
    const double delta = compute_threshold(w, ConstantSparsity{r});
    const double achieved = ttq_partition(w, delta).sparsity();
    double best = 2.0;
    std::vector<double> cuts{0.0};
    for (double v : w.values()) {
      cuts.push_back(std::abs(v));
    }
    for (double c : cuts) {
      const double s = ttq_partition(w, c).sparsity();
      if (s >= r - 1e-12) {
        best = std::min(best, s);
      }
    }
    EXPECT_DOUBLE_EQ(achieved, best) << "n=" << n << " r=" << r;
    EXPECT_GE(achieved, r - 1e-12);
    EXPECT_LE(achieved, r + 1.0 / static_cast<double>(n) + 1e-12);
  }
}

TEST(Threshold, TiesAllGoToZero) {
  const Tensor w = Tensor::vector({0.2, -0.2, 0.2, 1.0});
  const double delta = compute_threshold(w, ConstantSparsity{0.25});
  EXPECT_DOUBLE_EQ(delta, 0.2);
  EXPECT_DOUBLE_EQ(ttq_partition(w, delta).sparsity(), 0.75);
}

TEST(Policy, Validation) {
  EXPECT_NO_THROW(validate_policy(ConstantFactor{0.05}));
  EXPECT_THROW(validate_policy(ConstantFactor{0.0}), ConfigError);
  EXPECT_THROW(validate_policy(ConstantFactor{1.0}), ConfigError);
  EXPECT_NO_THROW(validate_policy(ConstantSparsity{0.0}));
  EXPECT_THROW(validate_policy(ConstantSparsity{1.0}), ConfigError);
  EXPECT_THROW(validate_policy(ConstantSparsity{-0.1}), ConfigError);
}

TEST(Partition, DirectApplicationAndBoundaries) {
  EXPECT_EQ(ttq_partition(Tensor::vector({0.8, -0.3, 0.02, -0.01}), 0.04).signs(),
            (std::vector<std::int8_t>{1, -1, 0, 0}));
  EXPECT_EQ(ttq_partition(Tensor::vector({0.5, -1.0}), 1.0).count_zero(), 2u);
  EXPECT_EQ(ttq_partition(Tensor::vector({0.25, -0.25, 0.3}), 0.25).signs(),
            (std::vector<std::int8_t>{0, 0, 1}));
  EXPECT_THROW(ttq_partition(Tensor::vector({1.0}), -0.1), Error);
}

TEST(Partition, RejectsBadSigns) {
  EXPECT_THROW(TernaryPartition(Shape{2}, std::vector<std::int8_t>{1, 2}), Error);
  EXPECT_THROW(TernaryPartition(Shape{3}, std::vector<std::int8_t>{1, 0}), DimensionError);
}

TEST(Materialize, Codebook) {
  EXPECT_EQ(ttq_materialize(part({1, -1, 0}), {1.2, 0.7}).values(), (std::vector<double>{1.2, -0.7, 0}));
  EXPECT_EQ(ttq_materialize(part({0, 0}), {1.2, 0.7}).values(), (std::vector<double>{0, 0}));
  EXPECT_EQ(ttq_materialize(part({1, -1, 0}), {0.4, 0.4}).values(), (std::vector<double>{0.4, -0.4, 0}));
}

TEST(Materialize, AtMostThreeValuesAndMatchingZeroFraction) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor w = normalize_weights(random_tensor({64}, rng));
    const double delta = rng.uniform(0.0, 0.8);
    const Tensor t = ttq_materialize(ttq_partition(w, delta), {0.9, 0.3});
    EXPECT_LE(std::set<double>(t.values().begin(), t.values().end()).size(), 3u);
    const auto zeros = std::count(t.values().begin(), t.values().end(), 0.0);
    const auto small = std::count_if(w.values().begin(), w.values().end(),
                                     [&](double v) { return std::abs(v) <= delta; });
    EXPECT_EQ(zeros, small);
  }
}

TEST(Backward, HandExample) {
  const TtqGradients g = ttq_backward(Tensor::vector({0.5, -0.2, 0.1}), part({1, -1, 0}), {1.2, 0.7});
  EXPECT_DOUBLE_EQ(g.w_pos, 0.5);
  EXPECT_DOUBLE_EQ(g.w_neg, 0.2);  // -(sum over the negative set)
  EXPECT_DOUBLE_EQ(g.latent[0], 1.2 * 0.5);
  EXPECT_DOUBLE_EQ(g.latent[1], 0.7 * -0.2);
  EXPECT_DOUBLE_EQ(g.latent[2], 0.1);
}

TEST(Backward, UnsignedSumConvention) {
  const TtqGradients g = ttq_backward(Tensor::vector({0.5, -0.2, 0.1}), part({1, -1, 0}), {1.2, 0.7},
                                      GradConvention::UnsignedSum);
  EXPECT_DOUBLE_EQ(g.w_pos, 0.5);
  EXPECT_DOUBLE_EQ(g.w_neg, -0.2);
  EXPECT_DOUBLE_EQ(g.latent[1], 0.7 * -0.2);
}

TEST(Backward, AllZeroPartitionIsStraightThrough) {
  const Tensor grad = Tensor::vector({0.3, -0.4, 2.0});
  const TtqGradients g = ttq_backward(grad, part({0, 0, 0}), {1.2, 0.7});
  EXPECT_EQ(g.latent, grad);
  EXPECT_EQ(g.w_pos, 0.0);
  EXPECT_EQ(g.w_neg, 0.0);
}

TEST(Backward, ShapeMismatch) {
  EXPECT_THROW(ttq_backward(Tensor::vector({1, 2}), part({1, 0, -1}), {}), DimensionError);
}

// Loss 0.5 * |w_t - target|^2 is smooth in the codebook with the partition frozen.
TEST(Backward, CodebookGradientsMatchFiniteDifferences) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 5 + rng.index(30);
    std::vector<std::int8_t> s(n);
    for (auto& v : s) {
      v = static_cast<std::int8_t>(static_cast<int>(rng.index(3)) - 1);
    }
    const TernaryPartition p(Shape{n}, s);
    const Tensor target = random_tensor({n}, rng);
    auto loss = [&](const TernaryCodebook& cb) {
      const Tensor t = ttq_materialize(p, cb);
      double l = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        l += 0.5 * (t[i] - target[i]) * (t[i] - target[i]);
      }
      return l;
    };
    const TernaryCodebook cb{rng.uniform(0.2, 2.0), rng.uniform(0.2, 2.0)};
    const Tensor t = ttq_materialize(p, cb);
    Tensor grad(Shape{n});
    for (std::size_t i = 0; i < n; ++i) {
      grad[i] = t[i] - target[i];
    }
    const TtqGradients g = ttq_backward(grad, p, cb);
    const double h = 1e-6;
    const double fd_pos = (loss({cb.w_pos + h, cb.w_neg}) - loss({cb.w_pos - h, cb.w_neg})) / (2 * h);
    const double fd_neg = (loss({cb.w_pos, cb.w_neg + h}) - loss({cb.w_pos, cb.w_neg - h})) / (2 * h);
    EXPECT_NEAR(g.w_pos, fd_pos, 1e-6);
    EXPECT_NEAR(g.w_neg, fd_neg, 1e-6);
  }
}

TEST(Backward, SymmetricCodebookScalesNonzeroSets) {
  Rng rng(6);
  const Tensor w = normalize_weights(random_tensor({40}, rng));
  const TernaryPartition p = ttq_partition(w, 0.3);
  const Tensor grad = random_tensor({40}, rng);
  const TtqGradients g = ttq_backward(grad, p, {0.6, 0.6});
  for (std::size_t i = 0; i < 40; ++i) {
    EXPECT_DOUBLE_EQ(g.latent[i], p[i] != 0 ? 0.6 * grad[i] : grad[i]);
  }
}

TEST(Backward, LinearInGradient) {
  Rng rng(7);
  const Tensor w = normalize_weights(random_tensor({30}, rng));
  const TernaryPartition p = ttq_partition(w, 0.2);
  const Tensor grad = random_tensor({30}, rng);
  Tensor scaled = grad;
  for (double& v : scaled.data()) {
    v *= 4.0;  // power of two keeps the comparison exact
  }
  const TtqGradients a = ttq_backward(grad, p, {1.3, 0.6});
  const TtqGradients b = ttq_backward(scaled, p, {1.3, 0.6});
  EXPECT_DOUBLE_EQ(b.w_pos, 4.0 * a.w_pos);
  EXPECT_DOUBLE_EQ(b.w_neg, 4.0 * a.w_neg);
  for (std::size_t i = 0; i < 30; ++i) {
    EXPECT_DOUBLE_EQ(b.latent[i], 4.0 * a.latent[i]);
  }
}

TEST(Quantize, PipelineIsPure) {
  Rng rng(8);
  const Tensor w = random_tensor({50}, rng);
  const TtqForward a = ttq_quantize(w, {0.8, 0.5}, ConstantFactor{0.05});
  const TtqForward b = ttq_quantize(w, {0.8, 0.5}, ConstantFactor{0.05});
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.partition, b.partition);
  EXPECT_DOUBLE_EQ(a.delta, 0.05);
  EXPECT_DOUBLE_EQ(a.scale, 1.0 / w.max_abs());
}

TEST(Codebook, ClampKeepsPositive) {
  TernaryCodebook cb{-1.0, 0.0};
  cb.clamp();
  EXPECT_EQ(cb.w_pos, TernaryCodebook::kFloor);
  EXPECT_EQ(cb.w_neg, TernaryCodebook::kFloor);
  TernaryCodebook ok{0.5, 2.0};
  ok.clamp();
  EXPECT_EQ(ok, (TernaryCodebook{0.5, 2.0}));
}

TEST(Twn, HandExamples) {
  TwnScale s = twn_threshold_and_scale(Tensor::vector({1, -1, 1, -1}));
  EXPECT_DOUBLE_EQ(s.delta, 0.7);
  EXPECT_DOUBLE_EQ(s.scale, 1.0);
  s = twn_threshold_and_scale(Tensor::vector({1.0, 0.1}));
  EXPECT_DOUBLE_EQ(s.delta, 0.385);
  EXPECT_DOUBLE_EQ(s.scale, 1.0);
  EXPECT_EQ(twn_quantize(Tensor::vector({1, -1, 1, -1})).values(), (std::vector<double>{1, -1, 1, -1}));
  const Tensor q = twn_quantize(Tensor::vector({0.1, -0.1}));
  EXPECT_DOUBLE_EQ(q[0], 0.1);
  EXPECT_DOUBLE_EQ(q[1], -0.1);
  EXPECT_EQ(twn_quantize(Tensor(Shape{4})), Tensor(Shape{4}));
}

double l2_to_ternary(const Tensor& w, double delta, double scale) {
  double d = 0.0;
  for (double v : w.values()) {
    const double q = std::abs(v) > delta ? std::copysign(scale, v) : 0.0;
    d += (v - q) * (v - q);
  }
  return d;
}

// The closed-form scale is L2-optimal for its threshold, so no nearby scale
// does better; nearby thresholds may, since 0.7*mean is an approximation.
TEST(Twn, ScaleIsNearOptimalOnAGrid) {
  Rng rng(9);
  const Tensor w = random_tensor({200}, rng, -1, 1);
  const TwnScale s = twn_threshold_and_scale(w);
  const double base = l2_to_ternary(w, s.delta, s.scale);
  double best_grid = std::numeric_limits<double>::infinity();
  for (int i = -5; i < 5; ++i) {
    for (int j = -5; j < 5; ++j) {
      const double d = s.delta * (1.0 + 0.05 * i);
      const double sc = s.scale * (1.0 + 0.05 * j);
      best_grid = std::min(best_grid, l2_to_ternary(w, d, sc));
      if (i == 0) {
        EXPECT_LE(base, l2_to_ternary(w, d, sc) + 1e-12);
      }
    }
  }
  EXPECT_LE(base, best_grid * 1.05);
}

TEST(Dorefa, HandExamplesAndUniformMagnitude) {
  EXPECT_EQ(dorefa_binarize(Tensor::vector({1, -1})).values(), (std::vector<double>{1, -1}));
  const Tensor b = dorefa_binarize(Tensor::vector({2, -1, 1}));
  EXPECT_DOUBLE_EQ(b[0], 4.0 / 3.0);
  EXPECT_DOUBLE_EQ(b[1], -4.0 / 3.0);
  EXPECT_DOUBLE_EQ(dorefa_binarize(Tensor::vector({0.0, -2.0}))[0], 1.0);  // sign(0) = +1
  Rng rng(10);
  const Tensor w = random_tensor({100}, rng);
  double mean = 0.0;
  for (double v : w.values()) {
    mean += std::abs(v);
  }
  mean /= 100.0;
  const Tensor q = dorefa_binarize(w);
  for (double v : q.values()) {
    EXPECT_EQ(std::abs(v), mean);
  }
}

TEST(Stochastic, DegenerateDraws) {
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(stochastic_binarize(Tensor::vector({1.0, -1.0, 3.0}), rng).values(),
              (std::vector<double>{1, -1, 1}));
    EXPECT_EQ(stochastic_ternarize(Tensor::vector({0.0}), rng)[0], 0.0);
    const Tensor t = stochastic_ternarize(Tensor::vector({0.4, -0.7}), rng);
    EXPECT_TRUE(t[0] == 0.0 || t[0] == 1.0);
    EXPECT_TRUE(t[1] == 0.0 || t[1] == -1.0);
  }
}

TEST(Stochastic, MeansApproachLatentValue) {
  Rng rng(12);
  const Tensor w = Tensor::vector({-0.9, -0.35, 0.0, 0.2, 0.75});
  const int draws = 100000;
  std::vector<double> tern(w.size()), bin(w.size());
  for (int d = 0; d < draws; ++d) {
    const Tensor t = stochastic_ternarize(w, rng);
    const Tensor b = stochastic_binarize(w, rng);
    for (std::size_t i = 0; i < w.size(); ++i) {
      tern[i] += t[i];
      bin[i] += b[i];
    }
  }
  for (std::size_t i = 0; i < w.size(); ++i) {
    EXPECT_NEAR(tern[i] / draws, w[i], 0.01);
    EXPECT_NEAR(bin[i] / draws, w[i], 0.01);
  }
}

TEST(Stochastic, DeterministicGivenSeed) {
  Rng a(13), b(13);
  const Tensor w = Tensor::vector({0.1, -0.5, 0.9, 0.3});
  EXPECT_EQ(stochastic_ternarize(w, a), stochastic_ternarize(w, b));
}

TEST(Names, RoundTrip) {
  for (QuantizerKind k : {QuantizerKind::None, QuantizerKind::TTQ, QuantizerKind::TWN,
                          QuantizerKind::DoReFaBinary, QuantizerKind::StochasticBinary,
                          QuantizerKind::StochasticTernary}) {
    EXPECT_EQ(parse_quantizer(quantizer_name(k)), k);
  }
  EXPECT_THROW(parse_quantizer("nope"), ConfigError);
  EXPECT_EQ(parse_convention("unsigned-sum"), GradConvention::UnsignedSum);
  EXPECT_THROW(parse_convention("literal"), ConfigError);
  EXPECT_EQ(parse_convention(convention_name(GradConvention::ChainRule)), GradConvention::ChainRule);
}

}  // namespace
}  // namespace ttq
