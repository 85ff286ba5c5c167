// Copyright 2026 The TTQ Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ttq/quantization.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ttq/errors.hpp"

namespace ttq {

void TernaryCodebook::clamp() {
  w_pos = std::max(w_pos, kFloor);
  w_neg = std::max(w_neg, kFloor);
}

TernaryPartition::TernaryPartition(Shape shape, std::vector<std::int8_t> signs)
    : shape_(std::move(shape)), signs_(std::move(signs)) {
  if (shape_numel(shape_) != signs_.size()) {
    throw DimensionError("partition shape " + shape_to_string(shape_) + " needs " +
                         std::to_string(shape_numel(shape_)) + " signs, got " +
                         std::to_string(signs_.size()));
  }
  for (std::int8_t s : signs_) {
    if (s < -1 || s > 1) {
      throw Error("partition sign " + std::to_string(s) + " outside {-1, 0, +1}");
    }
  }
}

std::size_t TernaryPartition::count_positive() const {
  return static_cast<std::size_t>(std::count(signs_.begin(), signs_.end(), std::int8_t{1}));
}

std::size_t TernaryPartition::count_negative() const {
  return static_cast<std::size_t>(std::count(signs_.begin(), signs_.end(), std::int8_t{-1}));
}

std::size_t TernaryPartition::count_zero() const {
  return static_cast<std::size_t>(std::count(signs_.begin(), signs_.end(), std::int8_t{0}));
}

double TernaryPartition::sparsity() const {
  if (signs_.empty()) {
    return 0.0;
  }
  return static_cast<double>(count_zero()) / static_cast<double>(signs_.size());
}

void validate_policy(const ThresholdPolicy& policy) {
  if (const auto* f = std::get_if<ConstantFactor>(&policy)) {
    if (!(f->t > 0.0 && f->t < 1.0)) {
      throw ConfigError("threshold factor t must lie in (0, 1), got " + std::to_string(f->t));
    }
  } else {
    const auto& s = std::get<ConstantSparsity>(policy);
    if (!(s.r >= 0.0 && s.r < 1.0)) {
      throw ConfigError("target sparsity r must lie in [0, 1), got " + std::to_string(s.r));
    }
  }
}

std::string policy_to_string(const ThresholdPolicy& policy) {
  std::ostringstream os;
  if (const auto* f = std::get_if<ConstantFactor>(&policy)) {
    os << "factor(t=" << f->t << ")";
  } else {
    os << "sparsity(r=" << std::get<ConstantSparsity>(policy).r << ")";
  }
  return os.str();
}

std::string_view quantizer_name(QuantizerKind kind) {
  switch (kind) {
    case QuantizerKind::None:
      return "none";
    case QuantizerKind::TTQ:
      return "ttq";
    case QuantizerKind::TWN:
      return "twn";
    case QuantizerKind::DoReFaBinary:
      return "dorefa";
    case QuantizerKind::StochasticBinary:
      return "stochastic-binary";
    case QuantizerKind::StochasticTernary:
      return "stochastic-ternary";
  }
  return "unknown";
}

QuantizerKind parse_quantizer(std::string_view name) {
  for (auto kind : {QuantizerKind::None, QuantizerKind::TTQ, QuantizerKind::TWN,
                    QuantizerKind::DoReFaBinary, QuantizerKind::StochasticBinary,
                    QuantizerKind::StochasticTernary}) {
    if (quantizer_name(kind) == name) {
      return kind;
    }
  }
  throw ConfigError("unknown quantizer '" + std::string(name) +
                    "' (expected none, ttq, twn, dorefa, stochastic-binary, stochastic-ternary)");
}

std::string_view convention_name(GradConvention c) {
  return c == GradConvention::ChainRule ? "chain-rule" : "unsigned-sum";
}

GradConvention parse_convention(std::string_view name) {
  if (name == "chain-rule") {
    return GradConvention::ChainRule;
  }
  if (name == "unsigned-sum") {
    return GradConvention::UnsignedSum;
  }
  throw ConfigError("unknown gradient convention '" + std::string(name) +
                    "' (expected chain-rule or unsigned-sum)");
}

Tensor normalize_weights(const Tensor& w_latent) {
  const double m = w_latent.max_abs();
  if (!(m > 0.0)) {
    throw DegenerateWeightsError("cannot normalize an all-zero weight tensor of shape " +
                                 shape_to_string(w_latent.shape()));
  }
  Tensor out = w_latent;
  for (double& v : out.data()) {
    v /= m;
  }
  return out;
}

double compute_threshold(const Tensor& w_norm, const ThresholdPolicy& policy) {
  validate_policy(policy);
  if (const auto* f = std::get_if<ConstantFactor>(&policy)) {
    return f->t * w_norm.max_abs();
  }
  const double r = std::get<ConstantSparsity>(policy).r;
  const std::size_t n = w_norm.size();
  // Number of weights that must be zero. The small slack keeps products such
  // as 0.3 * 10 from rounding up to 4.
  const auto k = static_cast<std::size_t>(std::ceil(r * static_cast<double>(n) - 1e-9));
  if (k == 0) {
    return 0.0;
  }
  std::vector<double> mags(n);
  for (std::size_t i = 0; i < n; ++i) {
    mags[i] = std::abs(w_norm[i]);
  }
  std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(k - 1), mags.end());
  return mags[k - 1];
}

TernaryPartition ttq_partition(const Tensor& w_norm, double delta) {
  if (!(delta >= 0.0)) {
    throw Error("threshold must be non-negative, got " + std::to_string(delta));
  }
  std::vector<std::int8_t> signs(w_norm.size());
  for (std::size_t i = 0; i < w_norm.size(); ++i) {
    const double v = w_norm[i];
    signs[i] = v > delta ? 1 : (v < -delta ? -1 : 0);
  }
  return TernaryPartition(w_norm.shape(), std::move(signs));
}

Tensor ttq_materialize(const TernaryPartition& partition, const TernaryCodebook& codebook) {
  Tensor out(partition.shape());
  for (std::size_t i = 0; i < partition.size(); ++i) {
    const std::int8_t s = partition[i];
    out[i] = s > 0 ? codebook.w_pos : (s < 0 ? -codebook.w_neg : 0.0);
  }
  return out;
}

TtqGradients ttq_backward(const Tensor& grad_wt, const TernaryPartition& partition,
                          const TernaryCodebook& codebook, GradConvention convention) {
  require_same_shape(grad_wt.shape(), partition.shape(), "ttq_backward");
  TtqGradients g{Tensor(grad_wt.shape()), 0.0, 0.0};
  double sum_neg = 0.0;
  for (std::size_t i = 0; i < grad_wt.size(); ++i) {
    const double gi = grad_wt[i];
    switch (partition[i]) {
      case 1:
        g.w_pos += gi;
        g.latent[i] = codebook.w_pos * gi;
        break;
      case -1:
        sum_neg += gi;
        g.latent[i] = codebook.w_neg * gi;
        break;
      default:
        g.latent[i] = gi;
        break;
    }
  }
  g.w_neg = convention == GradConvention::ChainRule ? -sum_neg : sum_neg;
  return g;
}

TtqForward ttq_quantize(const Tensor& w_latent, const TernaryCodebook& codebook,
                        const ThresholdPolicy& policy) {
  const double m = w_latent.max_abs();
  Tensor w_norm = normalize_weights(w_latent);
  const double delta = compute_threshold(w_norm, policy);
  TernaryPartition partition = ttq_partition(w_norm, delta);
  Tensor weights = ttq_materialize(partition, codebook);
  return TtqForward{std::move(partition), std::move(weights), delta, 1.0 / m};
}

TwnScale twn_threshold_and_scale(const Tensor& w) {
  double abs_sum = 0.0;
  for (double v : w.data()) {
    abs_sum += std::abs(v);
  }
  TwnScale s;
  s.delta = 0.7 * abs_sum / static_cast<double>(w.size());
  double kept = 0.0;
  std::size_t count = 0;
  for (double v : w.data()) {
    if (std::abs(v) > s.delta) {
      kept += std::abs(v);
      ++count;
    }
  }
  s.scale = count == 0 ? 0.0 : kept / static_cast<double>(count);
  return s;
}

TernaryPartition twn_partition(const Tensor& w, const TwnScale& s) {
  std::vector<std::int8_t> signs(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double v = w[i];
    signs[i] = v > s.delta ? 1 : (v < -s.delta ? -1 : 0);
  }
  return TernaryPartition(w.shape(), std::move(signs));
}

Tensor twn_quantize(const Tensor& w) {
  const TwnScale s = twn_threshold_and_scale(w);
  return ttq_materialize(twn_partition(w, s), TernaryCodebook{s.scale, s.scale});
}

TernaryPartition dorefa_partition(const Tensor& w) {
  std::vector<std::int8_t> signs(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    signs[i] = w[i] >= 0.0 ? 1 : -1;
  }
  return TernaryPartition(w.shape(), std::move(signs));
}

Tensor dorefa_binarize(const Tensor& w) {
  double abs_sum = 0.0;
  for (double v : w.data()) {
    abs_sum += std::abs(v);
  }
  const double e = abs_sum / static_cast<double>(w.size());
  return ttq_materialize(dorefa_partition(w), TernaryCodebook{e, e});
}

Tensor stochastic_binarize(const Tensor& w, Rng& rng) {
  Tensor out(w.shape());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double p = (std::clamp(w[i], -1.0, 1.0) + 1.0) / 2.0;
    out[i] = rng.uniform() < p ? 1.0 : -1.0;
  }
  return out;
}

Tensor stochastic_ternarize(const Tensor& w, Rng& rng) {
  Tensor out(w.shape());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double v = std::clamp(w[i], -1.0, 1.0);
    const double sign = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
    out[i] = rng.uniform() < std::abs(v) ? sign : 0.0;
  }
  return out;
}

TernaryPartition sign_partition(const Tensor& w) {
  std::vector<std::int8_t> signs(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    signs[i] = w[i] > 0.0 ? 1 : (w[i] < 0.0 ? -1 : 0);
  }
  return TernaryPartition(w.shape(), std::move(signs));
}

}  // namespace ttq
