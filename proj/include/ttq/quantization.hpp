// Copyright 2026 The TTQ Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ttq/random.hpp"
#include "ttq/tensor.hpp"

namespace ttq {

// Trained magnitudes of the positive and negative ternary values of a layer.
// Both are kept strictly positive; see clamp().
struct TernaryCodebook {
  double w_pos = 1.0;
  double w_neg = 1.0;

  static constexpr double kFloor = 1e-8;

  void clamp();
  friend bool operator==(const TernaryCodebook&, const TernaryCodebook&) = default;
};

// Per-weight ternary assignment: +1, 0 or -1, same shape as the latent weights.
class TernaryPartition {
 public:
  TernaryPartition() = default;
  // Throws DimensionError on length mismatch and Error on a sign outside {-1,0,1}.
  TernaryPartition(Shape shape, std::vector<std::int8_t> signs);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return signs_.size(); }
  const std::vector<std::int8_t>& signs() const { return signs_; }
  std::int8_t operator[](std::size_t i) const { return signs_[i]; }

  std::size_t count_positive() const;
  std::size_t count_negative() const;
  std::size_t count_zero() const;
  // Fraction of zeros; an empty partition has sparsity 0.
  double sparsity() const;
  double density() const { return 1.0 - sparsity(); }

  friend bool operator==(const TernaryPartition&, const TernaryPartition&) = default;

 private:
  Shape shape_;
  std::vector<std::int8_t> signs_;
};

// Threshold heuristics. ConstantFactor: delta = t * max|w|. ConstantSparsity:
// delta is the smallest cut giving at least a fraction r of zeros.
struct ConstantFactor {
  double t = 0.05;
  friend bool operator==(const ConstantFactor&, const ConstantFactor&) = default;
};
struct ConstantSparsity {
  double r = 0.0;
  friend bool operator==(const ConstantSparsity&, const ConstantSparsity&) = default;
};
using ThresholdPolicy = std::variant<ConstantFactor, ConstantSparsity>;

inline constexpr double kDefaultThresholdFactor = 0.05;

// Throws ConfigError unless t in (0,1) or r in [0,1).
void validate_policy(const ThresholdPolicy& policy);
std::string policy_to_string(const ThresholdPolicy& policy);

enum class QuantizerKind : std::uint8_t {
  None = 0,
  TTQ = 1,
  TWN = 2,
  DoReFaBinary = 3,
  StochasticBinary = 4,
  StochasticTernary = 5,
};

std::string_view quantizer_name(QuantizerKind kind);
// Accepts the names produced by quantizer_name(); throws ConfigError otherwise.
QuantizerKind parse_quantizer(std::string_view name);

// Sign convention for the gradient of the negative scale. With w = -w_neg on
// the negative set the chain rule gives a negated sum; UnsignedSum drops the
// sign and uses the plain sum over the negative set.
enum class GradConvention : std::uint8_t { ChainRule, UnsignedSum };

std::string_view convention_name(GradConvention c);
GradConvention parse_convention(std::string_view name);

// ---- TTQ -----------------------------------------------------------------

// w / max|w|. Throws DegenerateWeightsError for an all-zero tensor.
Tensor normalize_weights(const Tensor& w_latent);

double compute_threshold(const Tensor& w_norm, const ThresholdPolicy& policy);

// +1 where w > delta, -1 where w < -delta, 0 where |w| <= delta.
TernaryPartition ttq_partition(const Tensor& w_norm, double delta);

Tensor ttq_materialize(const TernaryPartition& partition, const TernaryCodebook& codebook);

struct TtqGradients {
  Tensor latent;
  double w_pos = 0.0;
  double w_neg = 0.0;
};

// Splits the gradient w.r.t. the ternary weights into the scale gradients
// (sums over the positive and negative sets) and the latent-weight gradient
// (scaled by w_pos / w_neg on the nonzero sets, passed through on zeros).
TtqGradients ttq_backward(const Tensor& grad_wt, const TernaryPartition& partition,
                          const TernaryCodebook& codebook,
                          GradConvention convention = GradConvention::ChainRule);

// Result of the full forward quantization pipeline for one tensor.
struct TtqForward {
  TernaryPartition partition;
  Tensor weights;
  double delta = 0.0;  // threshold on the normalized scale
  double scale = 1.0;  // 1 / max|w_latent|
};

// normalize -> threshold -> partition -> materialize.
TtqForward ttq_quantize(const Tensor& w_latent, const TernaryCodebook& codebook,
                        const ThresholdPolicy& policy);

// ---- baselines ---------------------------------------------------------

struct TwnScale {
  double delta = 0.0;
  double scale = 0.0;
};

// delta = 0.7 * mean|w|; scale = mean of |w_i| over |w_i| > delta (0 if none).
TwnScale twn_threshold_and_scale(const Tensor& w);
TernaryPartition twn_partition(const Tensor& w, const TwnScale& s);
Tensor twn_quantize(const Tensor& w);

// mean|w| * sign(w), with sign(0) = +1.
Tensor dorefa_binarize(const Tensor& w);
TernaryPartition dorefa_partition(const Tensor& w);

// Bernoulli((clip(w)+1)/2) * 2 - 1, elementwise independent.
Tensor stochastic_binarize(const Tensor& w, Rng& rng);
// Bernoulli(|clip(w)|) * sign(w).
Tensor stochastic_ternarize(const Tensor& w, Rng& rng);

// Sign pattern of a tensor known to hold values in {-a, 0, +b}.
TernaryPartition sign_partition(const Tensor& w);

}  // namespace ttq
