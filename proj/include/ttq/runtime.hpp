// Copyright 2026 The TTQ Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "ttq/model_format.hpp"
#include "ttq/network.hpp"
#include "ttq/tensor.hpp"

// Forward-only execution over packed ternary layers. Each output unit keeps the
// list of inputs under a positive weight and the list under a negative weight;
// the codebook scalars are applied once per output element.
namespace ttq {

class TernaryExecPlan {
 public:
  TernaryExecPlan() = default;

  const LayerKind& kind() const { return kind_; }
  const TernaryCodebook& codebook() const { return codebook_; }
  std::size_t units() const { return pos_begin_.empty() ? 0 : pos_begin_.size() - 1; }
  // Weights per unit: `in` for dense, channels*kh*kw for conv.
  std::size_t fan_in() const { return fan_in_; }

  // Indices into the unit's weight row. For conv, index = (c*kh + ky)*kw + kx.
  std::span<const std::uint32_t> positive(std::size_t unit) const;
  std::span<const std::uint32_t> negative(std::size_t unit) const;
  std::size_t nonzeros() const { return pos_index_.size() + neg_index_.size(); }
  double density() const;

  friend TernaryExecPlan build_plan(const PackedTernaryTensor& packed, const LayerKind& kind);

 private:
  LayerKind kind_;
  TernaryCodebook codebook_;
  std::size_t fan_in_ = 0;
  std::vector<std::size_t> pos_begin_, neg_begin_;
  std::vector<std::uint32_t> pos_index_, neg_index_;
};

// Throws CorruptModelError on invalid packed data and DimensionError when the
// packed shape does not match `kind`.
TernaryExecPlan build_plan(const PackedTernaryTensor& packed, const LayerKind& kind);

// input [N x in] (or any [N x ...] with matching element count) -> [N x out].
Tensor ternary_dense_forward(const TernaryExecPlan& plan, const Tensor& input,
                             const std::optional<Tensor>& bias = std::nullopt);
// input [N x C x H x W] -> [N x F x OH x OW].
Tensor ternary_conv_forward(const TernaryExecPlan& plan, const Tensor& input,
                            const std::optional<Tensor>& bias = std::nullopt);

struct OpCounts {
  std::uint64_t output_elements = 0;
  std::uint64_t multiplications = 0;
  std::uint64_t additions = 0;     // nonzero-weight MACs
  std::uint64_t skipped = 0;       // zero-weight MACs
  std::uint64_t baseline_macs = 0; // dense full-precision MACs for the same layer

  OpCounts& operator+=(const OpCounts& o);
  friend bool operator==(const OpCounts&, const OpCounts&) = default;
};

// `input_shape` includes the batch dimension; a zero batch gives all zeros.
OpCounts op_count_report(const TernaryExecPlan& plan, const Shape& input_shape);

struct LayerOpCounts {
  std::size_t layer = 0;
  bool quantized = false;
  OpCounts counts;
};

// A whole imported model ready for execution: packed layers run through their
// plans, full-precision layers through the dense kernels.
class CompiledModel {
 public:
  explicit CompiledModel(InferenceModel model);

  const InferenceModel& model() const { return model_; }
  Tensor forward(const Tensor& input) const;
  // Full-precision layers count every MAC as one multiplication and one addition.
  std::vector<LayerOpCounts> op_counts(std::size_t batch) const;

 private:
  InferenceModel model_;
  std::vector<std::optional<TernaryExecPlan>> plans_;
};

struct BenchmarkResult {
  double plan_seconds = 0.0;       // per forward pass, best of the repeats
  double reference_seconds = 0.0;  // dense reference forward
};

// Wall-clock timings only; hardware dependent and never asserted on.
BenchmarkResult benchmark_forward(const CompiledModel& model, const Tensor& input,
                                  std::size_t repeats);

}  // namespace ttq
