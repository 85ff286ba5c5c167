// Copyright 2026 The TTQ Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ttq/network.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ttq/errors.hpp"
#include "ttq/ops.hpp"

namespace ttq {

Shape weight_shape(const LayerKind& kind) {
  if (const auto* d = std::get_if<DenseShape>(&kind)) {
    return {d->out, d->in};
  }
  const auto& c = std::get<ConvShape>(kind);
  return {c.filters, c.channels, c.kernel_h, c.kernel_w};
}

std::size_t output_units(const LayerKind& kind) {
  if (const auto* d = std::get_if<DenseShape>(&kind)) {
    return d->out;
  }
  return std::get<ConvShape>(kind).filters;
}

Shape layer_output_shape(const LayerKind& kind, const Shape& sample_shape) {
  if (const auto* d = std::get_if<DenseShape>(&kind)) {
    if (shape_numel(sample_shape) != d->in) {
      throw DimensionError("dense layer expects " + std::to_string(d->in) +
                           " inputs, got sample shape " + shape_to_string(sample_shape));
    }
    return {d->out};
  }
  const auto& c = std::get<ConvShape>(kind);
  if (sample_shape.size() != 3 || sample_shape[0] != c.channels) {
    throw DimensionError("conv layer expects [" + std::to_string(c.channels) +
                         " x H x W] input, got " + shape_to_string(sample_shape));
  }
  const ops::Conv2dGeometry geom{c.stride, c.padding};
  return {c.filters, ops::conv_output_extent(sample_shape[1], c.kernel_h, geom),
          ops::conv_output_extent(sample_shape[2], c.kernel_w, geom)};
}

namespace {

ops::Conv2dGeometry geometry(const ConvShape& c) { return {c.stride, c.padding}; }

Tensor as_dense_input(const Tensor& input, const DenseShape& d) {
  if (input.rank() < 2 || input.size() / input.dim(0) != d.in) {
    throw DimensionError("dense layer [" + std::to_string(d.out) + " x " + std::to_string(d.in) +
                         "] cannot consume input " + shape_to_string(input.shape()));
  }
  return input.rank() == 2 ? input : ops::flatten_batch(input);
}

// Most likely outcome of each stochastic draw, used in eval mode.
TernaryPartition stochastic_mode_partition(const Tensor& w, bool ternary) {
  std::vector<std::int8_t> signs(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double v = std::clamp(w[i], -1.0, 1.0);
    if (ternary) {
      signs[i] = std::abs(v) > 0.5 ? (v > 0.0 ? 1 : -1) : 0;
    } else {
      signs[i] = v >= 0.0 ? 1 : -1;
    }
  }
  return TernaryPartition(w.shape(), std::move(signs));
}

}  // namespace

MaterializedWeights materialize_weights(const QuantizedLayer& layer, const QuantizeContext& ctx) {
  const Tensor& w = layer.latent_weights;
  MaterializedWeights m;
  switch (layer.quantizer) {
    case QuantizerKind::None:
      m.weights = w;
      return m;
    case QuantizerKind::TTQ: {
      if (!layer.codebook) {
        throw Error("TTQ layer has no codebook");
      }
      TtqForward f = ttq_quantize(w, *layer.codebook, layer.policy);
      m.weights = std::move(f.weights);
      m.partition = std::move(f.partition);
      m.codebook = *layer.codebook;
      m.delta = f.delta;
      m.scale = f.scale;
      return m;
    }
    case QuantizerKind::TWN: {
      const TwnScale s = twn_threshold_and_scale(w);
      m.partition = twn_partition(w, s);
      m.codebook = TernaryCodebook{s.scale, s.scale};
      m.delta = s.delta;
      break;
    }
    case QuantizerKind::DoReFaBinary: {
      double abs_sum = 0.0;
      for (double v : w.data()) {
        abs_sum += std::abs(v);
      }
      const double e = abs_sum / static_cast<double>(w.size());
      m.partition = dorefa_partition(w);
      m.codebook = TernaryCodebook{e, e};
      break;
    }
    case QuantizerKind::StochasticBinary:
    case QuantizerKind::StochasticTernary: {
      const bool ternary = layer.quantizer == QuantizerKind::StochasticTernary;
      if (ctx.mode == Mode::Train) {
        if (ctx.rng == nullptr) {
          throw Error("stochastic quantizer needs a random source in train mode");
        }
        m.partition = sign_partition(ternary ? stochastic_ternarize(w, *ctx.rng)
                                             : stochastic_binarize(w, *ctx.rng));
      } else {
        m.partition = stochastic_mode_partition(w, ternary);
      }
      m.codebook = TernaryCodebook{1.0, 1.0};
      break;
    }
  }
  m.weights = ttq_materialize(*m.partition, *m.codebook);
  return m;
}

LayerForward quantized_forward(const QuantizedLayer& layer, const Tensor& input,
                               const QuantizeContext& ctx) {
  MaterializedWeights m = materialize_weights(layer, ctx);
  LayerForward f;
  if (const auto* d = std::get_if<DenseShape>(&layer.kind)) {
    f.output = ops::matmul_transposed_b(as_dense_input(input, *d), m.weights);
  } else {
    f.output = ops::conv2d(input, m.weights, geometry(std::get<ConvShape>(layer.kind)));
  }
  if (layer.bias) {
    f.output = ops::add_bias(f.output, *layer.bias);
  }
  f.partition = m.partition;
  f.context.filled = true;
  f.context.input = input;
  f.context.partition = std::move(m.partition);
  f.context.codebook = m.codebook;
  f.context.scale = m.scale;
  return f;
}

LayerGradients quantized_backward(const QuantizedLayer& layer, const SavedContext& saved,
                                  const Tensor& grad_output, GradConvention convention) {
  if (!saved.filled) {
    throw Error("quantized_backward: missing saved context (run quantized_forward first)");
  }
  const bool quantized = layer.quantizer != QuantizerKind::None;
  if (quantized && (!saved.partition || !saved.codebook)) {
    throw Error("quantized_backward: saved context lacks the partition of a quantized layer");
  }
  const Tensor weights =
      quantized ? ttq_materialize(*saved.partition, *saved.codebook) : layer.latent_weights;

  LayerGradients g;
  Tensor grad_wt;
  if (const auto* d = std::get_if<DenseShape>(&layer.kind)) {
    const Tensor x = as_dense_input(saved.input, *d);
    grad_wt = ops::matmul_transposed_a(grad_output, x);
    g.input = ops::matmul(grad_output, weights).reshaped(saved.input.shape());
  } else {
    const auto geom = geometry(std::get<ConvShape>(layer.kind));
    grad_wt = ops::conv2d_backward_kernel(grad_output, saved.input, weights.shape(), geom);
    g.input = ops::conv2d_backward_input(grad_output, weights, saved.input.shape(), geom);
  }
  if (layer.bias) {
    g.bias = ops::bias_gradient(grad_output);
  }
  if (layer.quantizer == QuantizerKind::TTQ) {
    TtqGradients t = ttq_backward(grad_wt, *saved.partition, *saved.codebook, convention);
    g.latent = std::move(t.latent);
    g.w_pos = t.w_pos;
    g.w_neg = t.w_neg;
  } else {
    g.latent = std::move(grad_wt);
  }
  return g;
}

double assignment_churn(const TernaryPartition& prev, const TernaryPartition& next) {
  require_same_shape(prev.shape(), next.shape(), "assignment_churn");
  if (prev.size() == 0) {
    return 0.0;
  }
  std::size_t changed = 0;
  for (std::size_t i = 0; i < prev.size(); ++i) {
    changed += prev[i] != next[i] ? 1 : 0;
  }
  return static_cast<double>(changed) / static_cast<double>(prev.size());
}

// ---- model ---------------------------------------------------------------

std::vector<Shape> layer_input_shapes(const ModelSpec& spec) {
  if (spec.input_shape.empty()) {
    throw DimensionError("model input shape is empty");
  }
  std::vector<Shape> shapes;
  Shape current = spec.input_shape;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    shapes.push_back(current);
    try {
      current = layer_output_shape(spec.layers[i].kind, current);
    } catch (const DimensionError& e) {
      throw DimensionError("layer " + std::to_string(i) + ": " + e.what());
    }
  }
  return shapes;
}

QuantizerKind resolved_quantizer(const ModelSpec& spec, std::size_t layer) {
  const LayerSpec& ls = spec.layers.at(layer);
  if (ls.quantizer) {
    return *ls.quantizer;
  }
  const bool exempt = layer == 0 || layer + 1 == spec.layers.size();
  return exempt ? QuantizerKind::None : spec.default_quantizer;
}

ThresholdPolicy resolved_policy(const ModelSpec& spec, std::size_t layer) {
  const LayerSpec& ls = spec.layers.at(layer);
  return ls.policy ? *ls.policy : spec.default_policy;
}

bool same_architecture(const ModelSpec& a, const ModelSpec& b) {
  if (a.input_shape != b.input_shape || a.layers.size() != b.layers.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    if (a.layers[i].kind != b.layers[i].kind || a.layers[i].bias != b.layers[i].bias) {
      return false;
    }
  }
  return true;
}

Model Model::initialize(const ModelSpec& spec, std::uint64_t seed) {
  layer_input_shapes(spec);
  Rng rng(seed);
  std::vector<QuantizedLayer> layers;
  layers.reserve(spec.layers.size());
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& ls = spec.layers[i];
    QuantizedLayer layer;
    layer.kind = ls.kind;
    layer.quantizer = resolved_quantizer(spec, i);
    layer.policy = resolved_policy(spec, i);
    const Shape ws = weight_shape(ls.kind);
    const std::size_t fan_in = shape_numel(ws) / ws[0];
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    layer.latent_weights = Tensor(ws);
    for (double& v : layer.latent_weights.data()) {
      v = stddev * rng.normal();
    }
    if (ls.bias) {
      layer.bias = Tensor(Shape{output_units(ls.kind)});
    }
    layers.push_back(std::move(layer));
  }
  Model m = from_layers(spec, std::move(layers));
  m.init_codebooks();
  return m;
}

Model Model::from_layers(ModelSpec spec, std::vector<QuantizedLayer> layers) {
  layer_input_shapes(spec);
  if (spec.layers.size() != layers.size()) {
    throw ArchitectureMismatchError("spec has " + std::to_string(spec.layers.size()) +
                                    " layers, got " + std::to_string(layers.size()));
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const QuantizedLayer& l = layers[i];
    if (l.kind != spec.layers[i].kind) {
      throw ArchitectureMismatchError("layer " + std::to_string(i) + " geometry differs from the target model");
    }
    require_same_shape(l.latent_weights.shape(), weight_shape(l.kind), "layer weights");
    if (l.bias.has_value() != spec.layers[i].bias) {
      throw ArchitectureMismatchError("layer " + std::to_string(i) + " bias presence differs");
    }
    if (l.bias) {
      require_same_shape(l.bias->shape(), Shape{output_units(l.kind)}, "layer bias");
    }
    validate_policy(l.policy);
  }
  Model m;
  m.spec_ = std::move(spec);
  m.layers_ = std::move(layers);
  return m;
}

std::size_t Model::num_classes() const {
  return layers_.empty() ? 0 : output_units(layers_.back().kind);
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) {
    n += l.latent_weights.size() + (l.bias ? l.bias->size() : 0);
  }
  return n;
}

Tensor Model::forward(const Tensor& input, const QuantizeContext& ctx) const {
  Tensor x = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = quantized_forward(layers_[i], x, ctx).output;
    if (i + 1 < layers_.size()) {
      x = ops::relu(x);
    }
  }
  return x;
}

std::vector<std::optional<TernaryPartition>> Model::partitions(const QuantizeContext& ctx) const {
  std::vector<std::optional<TernaryPartition>> out;
  out.reserve(layers_.size());
  for (const auto& l : layers_) {
    out.push_back(materialize_weights(l, ctx).partition);
  }
  return out;
}

void Model::init_codebooks() {
  for (auto& l : layers_) {
    if (l.quantizer == QuantizerKind::TTQ) {
      const TwnScale s = twn_threshold_and_scale(l.latent_weights);
      TernaryCodebook cb{s.scale, s.scale};
      cb.clamp();
      l.codebook = cb;
    } else {
      l.codebook.reset();
    }
  }
}

// ---- tape recording --------------------------------------------------------

ad::Var record_quantizer(const QuantizedLayer& layer, const LayerVars& vars,
                         const QuantizeContext& ctx, GradConvention convention,
                         MaterializedWeights* out) {
  ad::Tape& tape = *vars.latent.tape();
  QuantizedLayer current = layer;
  if (layer.quantizer == QuantizerKind::TTQ) {
    if (!vars.w_pos || !vars.w_neg) {
      throw Error("TTQ layer recorded without codebook variables");
    }
    current.codebook = TernaryCodebook{vars.w_pos->value().item(), vars.w_neg->value().item()};
  }
  current.latent_weights = vars.latent.value();
  MaterializedWeights m = materialize_weights(current, ctx);
  if (out != nullptr) {
    *out = m;
  }
  if (layer.quantizer == QuantizerKind::None) {
    return vars.latent;
  }
  if (layer.quantizer != QuantizerKind::TTQ) {
    // Straight-through estimator.
    return tape.record(m.weights, {vars.latent}, [](const Tensor& g) {
      return std::vector<std::optional<Tensor>>{g};
    });
  }
  TernaryPartition partition = *m.partition;
  TernaryCodebook codebook = *m.codebook;
  return tape.record(m.weights, {vars.latent, *vars.w_pos, *vars.w_neg},
                     [partition = std::move(partition), codebook, convention](const Tensor& g) {
                       TtqGradients t = ttq_backward(g, partition, codebook, convention);
                       return std::vector<std::optional<Tensor>>{
                           std::move(t.latent), Tensor::scalar(t.w_pos), Tensor::scalar(t.w_neg)};
                     });
}

TapeForward record_forward(ad::Tape& tape, const Model& model, const Tensor& input,
                           const QuantizeContext& ctx, GradConvention convention) {
  TapeForward f;
  ad::Var x = tape.constant(input);
  const auto& layers = model.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const QuantizedLayer& layer = layers[i];
    LayerVars vars;
    vars.latent = tape.leaf(layer.latent_weights);
    if (layer.quantizer == QuantizerKind::TTQ) {
      vars.w_pos = tape.leaf(Tensor::scalar(layer.codebook->w_pos));
      vars.w_neg = tape.leaf(Tensor::scalar(layer.codebook->w_neg));
    }
    if (layer.bias) {
      vars.bias = tape.leaf(*layer.bias);
    }
    MaterializedWeights m;
    ad::Var w = record_quantizer(layer, vars, ctx, convention, &m);
    if (std::holds_alternative<DenseShape>(layer.kind)) {
      if (x.value().rank() > 2) {
        x = ad::flatten_batch(x);
      }
      x = ad::matmul(x, ad::transpose(w));
    } else {
      x = ad::conv2d(x, w, geometry(std::get<ConvShape>(layer.kind)));
    }
    if (vars.bias) {
      x = ad::add_bias(x, *vars.bias);
    }
    if (i + 1 < layers.size()) {
      x = ad::relu(x);
    }
    f.params.push_back(vars);
    f.weights.push_back(std::move(m));
  }
  f.logits = x;
  return f;
}

}  // namespace ttq
