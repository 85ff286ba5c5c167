// Copyright 2026 The TTQ Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ttq/runtime.hpp"

#include <algorithm>
#include <chrono>
#include <limits>

#include "ttq/errors.hpp"
#include "ttq/ops.hpp"

namespace ttq {

namespace {

void check_bias(const std::optional<Tensor>& bias, std::size_t units, const char* context) {
  if (bias) {
    require_same_shape(bias->shape(), Shape{units}, context);
  }
}

double gather_sum(const double* row, std::span<const std::uint32_t> idx) {
  double s = 0.0;
  for (std::uint32_t i : idx) {
    s += row[i];
  }
  return s;
}

}  // namespace

std::span<const std::uint32_t> TernaryExecPlan::positive(std::size_t unit) const {
  return std::span<const std::uint32_t>(pos_index_).subspan(pos_begin_[unit],
                                                           pos_begin_[unit + 1] - pos_begin_[unit]);
}

std::span<const std::uint32_t> TernaryExecPlan::negative(std::size_t unit) const {
  return std::span<const std::uint32_t>(neg_index_).subspan(neg_begin_[unit],
                                                           neg_begin_[unit + 1] - neg_begin_[unit]);
}

double TernaryExecPlan::density() const {
  const std::size_t total = units() * fan_in_;
  return total == 0 ? 0.0 : static_cast<double>(nonzeros()) / static_cast<double>(total);
}

TernaryExecPlan build_plan(const PackedTernaryTensor& packed, const LayerKind& kind) {
  require_same_shape(packed.shape, weight_shape(kind), "build_plan");
  const TernaryPartition part = unpack_partition(packed);
  if (part.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw DimensionError("build_plan: layer too large for 32-bit indices");
  }
  TernaryExecPlan plan;
  plan.kind_ = kind;
  plan.codebook_ = packed.codebook;
  const std::size_t units = output_units(kind);
  plan.fan_in_ = part.size() / units;
  plan.pos_begin_.reserve(units + 1);
  plan.neg_begin_.reserve(units + 1);
  plan.pos_begin_.push_back(0);
  plan.neg_begin_.push_back(0);
  for (std::size_t u = 0; u < units; ++u) {
    for (std::size_t i = 0; i < plan.fan_in_; ++i) {
      const std::int8_t s = part[u * plan.fan_in_ + i];
      if (s > 0) {
        plan.pos_index_.push_back(static_cast<std::uint32_t>(i));
      } else if (s < 0) {
        plan.neg_index_.push_back(static_cast<std::uint32_t>(i));
      }
    }
    plan.pos_begin_.push_back(plan.pos_index_.size());
    plan.neg_begin_.push_back(plan.neg_index_.size());
  }
  return plan;
}

Tensor ternary_dense_forward(const TernaryExecPlan& plan, const Tensor& input,
                             const std::optional<Tensor>& bias) {
  const auto* d = std::get_if<DenseShape>(&plan.kind());
  if (d == nullptr) {
    throw DimensionError("ternary_dense_forward: plan is not a dense layer");
  }
  if (input.rank() < 2 || input.size() != input.dim(0) * d->in) {
    throw DimensionError("ternary_dense_forward: expected [N x " + std::to_string(d->in) +
                         "], got " + shape_to_string(input.shape()));
  }
  check_bias(bias, d->out, "ternary_dense_forward bias");
  const std::size_t n = input.dim(0);
  const double wp = plan.codebook().w_pos;
  const double wn = plan.codebook().w_neg;
  Tensor out(Shape{n, d->out});
  const double* x = input.data().data();
  double* y = out.data().data();
  for (std::size_t b = 0; b < n; ++b) {
    const double* row = x + b * d->in;
    for (std::size_t u = 0; u < d->out; ++u) {
      double v = wp * gather_sum(row, plan.positive(u)) - wn * gather_sum(row, plan.negative(u));
      if (bias) {
        v += (*bias)[u];
      }
      y[b * d->out + u] = v;
    }
  }
  return out;
}

Tensor ternary_conv_forward(const TernaryExecPlan& plan, const Tensor& input,
                            const std::optional<Tensor>& bias) {
  const auto* c = std::get_if<ConvShape>(&plan.kind());
  if (c == nullptr) {
    throw DimensionError("ternary_conv_forward: plan is not a conv layer");
  }
  if (input.rank() != 4 || input.dim(1) != c->channels) {
    throw DimensionError("ternary_conv_forward: expected [N x " + std::to_string(c->channels) +
                         " x H x W], got " + shape_to_string(input.shape()));
  }
  check_bias(bias, c->filters, "ternary_conv_forward bias");
  const ops::Conv2dGeometry geom{c->stride, c->padding};
  const std::size_t n = input.dim(0), h = input.dim(2), w = input.dim(3);
  const std::size_t oh = ops::conv_output_extent(h, c->kernel_h, geom);
  const std::size_t ow = ops::conv_output_extent(w, c->kernel_w, geom);
  const std::size_t khw = c->kernel_h * c->kernel_w;
  const double wp = plan.codebook().w_pos;
  const double wn = plan.codebook().w_neg;
  Tensor out(Shape{n, c->filters, oh, ow});
  const double* x = input.data().data();
  double* y = out.data().data();

  auto window_sum = [&](const double* img, std::span<const std::uint32_t> taps, std::size_t oy,
                        std::size_t ox) {
    double s = 0.0;
    for (std::uint32_t t : taps) {
      const std::size_t ch = t / khw;
      const std::size_t ky = (t % khw) / c->kernel_w;
      const std::size_t kx = t % c->kernel_w;
      // Signed arithmetic through the padded border.
      const auto iy = static_cast<std::ptrdiff_t>(oy * c->stride + ky) -
                      static_cast<std::ptrdiff_t>(c->padding);
      const auto ix = static_cast<std::ptrdiff_t>(ox * c->stride + kx) -
                      static_cast<std::ptrdiff_t>(c->padding);
      if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(h) ||
          ix >= static_cast<std::ptrdiff_t>(w)) {
        continue;
      }
      s += img[(ch * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)];
    }
    return s;
  };

  for (std::size_t b = 0; b < n; ++b) {
    const double* img = x + b * c->channels * h * w;
    for (std::size_t f = 0; f < c->filters; ++f) {
      const auto pos = plan.positive(f);
      const auto neg = plan.negative(f);
      const double bf = bias ? (*bias)[f] : 0.0;
      double* plane = y + (b * c->filters + f) * oh * ow;
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double v = wp * window_sum(img, pos, oy, ox) - wn * window_sum(img, neg, oy, ox);
          if (bias) {
            v += bf;
          }
          plane[oy * ow + ox] = v;
        }
      }
    }
  }
  return out;
}

OpCounts& OpCounts::operator+=(const OpCounts& o) {
  output_elements += o.output_elements;
  multiplications += o.multiplications;
  additions += o.additions;
  skipped += o.skipped;
  baseline_macs += o.baseline_macs;
  return *this;
}

OpCounts op_count_report(const TernaryExecPlan& plan, const Shape& input_shape) {
  OpCounts oc;
  if (input_shape.empty() || shape_numel(input_shape) == 0) {
    return oc;
  }
  std::uint64_t positions = input_shape[0];
  if (const auto* c = std::get_if<ConvShape>(&plan.kind())) {
    if (input_shape.size() != 4) {
      throw DimensionError("op_count_report: conv input must be [N x C x H x W]");
    }
    const ops::Conv2dGeometry geom{c->stride, c->padding};
    positions *= ops::conv_output_extent(input_shape[2], c->kernel_h, geom) *
                 ops::conv_output_extent(input_shape[3], c->kernel_w, geom);
  }
  const std::uint64_t units = plan.units();
  const std::uint64_t nnz = plan.nonzeros();
  oc.output_elements = positions * units;
  oc.multiplications = 2 * oc.output_elements;
  oc.additions = nnz * positions;
  oc.baseline_macs = units * plan.fan_in() * positions;
  oc.skipped = oc.baseline_macs - oc.additions;
  return oc;
}

CompiledModel::CompiledModel(InferenceModel model) : model_(std::move(model)) {
  for (const InferenceLayer& l : model_.layers) {
    if (const auto* p = std::get_if<PackedTernaryTensor>(&l.weights)) {
      plans_.push_back(build_plan(*p, l.kind));
    } else {
      plans_.emplace_back(std::nullopt);
    }
  }
}

Tensor CompiledModel::forward(const Tensor& input) const {
  Tensor x = input;
  for (std::size_t i = 0; i < model_.layers.size(); ++i) {
    const InferenceLayer& l = model_.layers[i];
    if (plans_[i]) {
      x = is_conv(l.kind) ? ternary_conv_forward(*plans_[i], x, l.bias)
                          : ternary_dense_forward(*plans_[i], x, l.bias);
    } else {
      const Tensor& w = std::get<Tensor>(l.weights);
      if (const auto* c = std::get_if<ConvShape>(&l.kind)) {
        x = ops::conv2d(x, w, ops::Conv2dGeometry{c->stride, c->padding});
      } else {
        x = ops::matmul_transposed_b(x.rank() == 2 ? x : ops::flatten_batch(x), w);
      }
      if (l.bias) {
        x = ops::add_bias(x, *l.bias);
      }
    }
    if (i + 1 < model_.layers.size()) {
      x = ops::relu(x);
    }
  }
  return x;
}

std::vector<LayerOpCounts> CompiledModel::op_counts(std::size_t batch) const {
  std::vector<LayerOpCounts> rows;
  Shape sample = model_.input_shape;
  for (std::size_t i = 0; i < model_.layers.size(); ++i) {
    const InferenceLayer& l = model_.layers[i];
    Shape full{batch};
    full.insert(full.end(), sample.begin(), sample.end());
    LayerOpCounts row;
    row.layer = i;
    row.quantized = plans_[i].has_value();
    if (plans_[i]) {
      row.counts = op_count_report(*plans_[i], full);
    } else {
      // Reuse the plan arithmetic with a fully dense layer.
      std::uint64_t positions = batch;
      if (const auto* c = std::get_if<ConvShape>(&l.kind)) {
        const ops::Conv2dGeometry geom{c->stride, c->padding};
        positions *= ops::conv_output_extent(sample[1], c->kernel_h, geom) *
                     ops::conv_output_extent(sample[2], c->kernel_w, geom);
      }
      const std::uint64_t units = output_units(l.kind);
      const std::uint64_t fan = shape_numel(weight_shape(l.kind)) / units;
      row.counts.output_elements = positions * units;
      row.counts.baseline_macs = positions * units * fan;
      row.counts.multiplications = row.counts.baseline_macs;
      row.counts.additions = row.counts.baseline_macs;
    }
    rows.push_back(row);
    sample = layer_output_shape(l.kind, sample);
  }
  return rows;
}

BenchmarkResult benchmark_forward(const CompiledModel& model, const Tensor& input,
                                  std::size_t repeats) {
  using clock = std::chrono::steady_clock;
  auto best_of = [&](auto&& fn) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < std::max<std::size_t>(repeats, 1); ++r) {
      const auto t0 = clock::now();
      fn();
      best = std::min(best, std::chrono::duration<double>(clock::now() - t0).count());
    }
    return best;
  };
  BenchmarkResult res;
  res.plan_seconds = best_of([&] { (void)model.forward(input); });
  res.reference_seconds = best_of([&] { (void)model.model().forward(input); });
  return res;
}

}  // namespace ttq
