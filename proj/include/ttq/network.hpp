// Copyright 2026 The TTQ Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "ttq/autodiff.hpp"
#include "ttq/quantization.hpp"
#include "ttq/random.hpp"
#include "ttq/tensor.hpp"

namespace ttq {

struct DenseShape {
  std::size_t in = 0;
  std::size_t out = 0;
  friend bool operator==(const DenseShape&, const DenseShape&) = default;
};

struct ConvShape {
  std::size_t filters = 0;
  std::size_t channels = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  friend bool operator==(const ConvShape&, const ConvShape&) = default;
};

using LayerKind = std::variant<DenseShape, ConvShape>;

inline bool is_conv(const LayerKind& kind) { return std::holds_alternative<ConvShape>(kind); }
// Dense weights are [out x in] (one row per output unit); conv weights are
// [filters x channels x kh x kw].
Shape weight_shape(const LayerKind& kind);
std::size_t output_units(const LayerKind& kind);
// Per-sample output shape for a per-sample input shape. Dense layers accept
// any input whose element count equals `in` (conv maps are flattened).
Shape layer_output_shape(const LayerKind& kind, const Shape& sample_shape);

// A layer with latent full-precision weights, an optional codebook (TTQ only)
// and the quantizer applied on every forward pass.
struct QuantizedLayer {
  LayerKind kind;
  QuantizerKind quantizer = QuantizerKind::None;
  ThresholdPolicy policy = ConstantFactor{};
  Tensor latent_weights;
  std::optional<Tensor> bias;
  std::optional<TernaryCodebook> codebook;
};

enum class Mode : std::uint8_t { Train, Eval };

// Train mode draws the stochastic quantizers from `rng` (required); eval mode
// replaces each draw with its most likely outcome.
struct QuantizeContext {
  Mode mode = Mode::Eval;
  Rng* rng = nullptr;
};

struct MaterializedWeights {
  Tensor weights;
  // Engaged for every quantized layer.
  std::optional<TernaryPartition> partition;
  // Effective codebook: trained for TTQ, (W, W) for TWN, (E, E) for DoReFa,
  // (1, 1) for the stochastic quantizers.
  std::optional<TernaryCodebook> codebook;
  double delta = 0.0;
  double scale = 1.0;
};

MaterializedWeights materialize_weights(const QuantizedLayer& layer, const QuantizeContext& ctx = {});

// Minimal state for the backward pass of one layer.
struct SavedContext {
  bool filled = false;
  Tensor input;
  std::optional<TernaryPartition> partition;
  std::optional<TernaryCodebook> codebook;
  double scale = 1.0;
};

struct LayerForward {
  Tensor output;  // pre-activation
  std::optional<TernaryPartition> partition;
  SavedContext context;
};

LayerForward quantized_forward(const QuantizedLayer& layer, const Tensor& input,
                               const QuantizeContext& ctx = {});

struct LayerGradients {
  Tensor latent;
  std::optional<double> w_pos;
  std::optional<double> w_neg;
  std::optional<Tensor> bias;
  Tensor input;
};

// Throws Error if `saved` was not produced by quantized_forward.
LayerGradients quantized_backward(const QuantizedLayer& layer, const SavedContext& saved,
                                  const Tensor& grad_output,
                                  GradConvention convention = GradConvention::ChainRule);

// Fraction of positions whose ternary sign differs.
double assignment_churn(const TernaryPartition& prev, const TernaryPartition& next);

// ---- model ---------------------------------------------------------------

struct LayerSpec {
  LayerKind kind;
  // Disengaged: first and last layers are full precision, the rest use the
  // model default. An explicit value always wins.
  std::optional<QuantizerKind> quantizer;
  std::optional<ThresholdPolicy> policy;
  bool bias = true;
};

struct ModelSpec {
  Shape input_shape;  // per sample, e.g. {2} or {1, 8, 8}
  std::vector<LayerSpec> layers;
  QuantizerKind default_quantizer = QuantizerKind::TTQ;
  ThresholdPolicy default_policy = ConstantFactor{kDefaultThresholdFactor};
};

// Per-layer input sample shapes; throws DimensionError if layers do not compose.
std::vector<Shape> layer_input_shapes(const ModelSpec& spec);
QuantizerKind resolved_quantizer(const ModelSpec& spec, std::size_t layer);
ThresholdPolicy resolved_policy(const ModelSpec& spec, std::size_t layer);
// Same input shape and layer geometry (quantizer assignments may differ).
bool same_architecture(const ModelSpec& a, const ModelSpec& b);

class Model {
 public:
  Model() = default;

  // He-normal latent weights, zero biases, TWN-initialized codebooks.
  static Model initialize(const ModelSpec& spec, std::uint64_t seed);
  // Adopts existing layers; validates shapes against the spec.
  static Model from_layers(ModelSpec spec, std::vector<QuantizedLayer> layers);

  const ModelSpec& spec() const { return spec_; }
  const std::vector<QuantizedLayer>& layers() const { return layers_; }
  std::vector<QuantizedLayer>& layers() { return layers_; }
  std::size_t num_classes() const;
  std::size_t parameter_count() const;

  // Logits for a batch [N x input_shape...]; ReLU between layers.
  Tensor forward(const Tensor& input, const QuantizeContext& ctx = {}) const;
  std::vector<std::optional<TernaryPartition>> partitions(const QuantizeContext& ctx = {}) const;

  // Sets each TTQ layer's codebook to the TWN scale of its latent weights.
  void init_codebooks();

 private:
  ModelSpec spec_;
  std::vector<QuantizedLayer> layers_;
};

// ---- tape recording --------------------------------------------------------

struct LayerVars {
  ad::Var latent;
  std::optional<ad::Var> w_pos;
  std::optional<ad::Var> w_neg;
  std::optional<ad::Var> bias;
};

struct TapeForward {
  ad::Var logits;
  std::vector<LayerVars> params;
  std::vector<MaterializedWeights> weights;
};

// Records the quantizer as a tape op: forward materializes the layer weights,
// backward applies ttq_backward (TTQ) or the straight-through identity.
ad::Var record_quantizer(const QuantizedLayer& layer, const LayerVars& vars,
                         const QuantizeContext& ctx, GradConvention convention,
                         MaterializedWeights* out);

TapeForward record_forward(ad::Tape& tape, const Model& model, const Tensor& input,
                           const QuantizeContext& ctx, GradConvention convention);

}  // namespace ttq
