// Copyright 2026 The TTQ Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "ttq/datasets.hpp"
#include "ttq/network.hpp"
#include "ttq/optimizer.hpp"
#include "ttq/quantization.hpp"

namespace ttq {

struct TrainConfig {
  OptimizerConfig optimizer = AdamConfig{};
  std::vector<LrMilestone> lr_schedule;
  double weight_decay = 0.0;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  // Scales the learning rate of the codebook scalars.
  double codebook_lr_multiplier = 1.0;
  GradConvention grad_convention = GradConvention::ChainRule;
  // Write a per-step record (sparsity, codebook, churn) for every quantized layer.
  bool record_steps = true;
};

// Throws ConfigError on an invalid configuration.
void validate(const TrainConfig& cfg);

struct LayerStepRecord {
  std::size_t layer = 0;
  QuantizerKind quantizer = QuantizerKind::None;
  std::size_t weights = 0;
  double sparsity = 0.0;
  double w_pos = 0.0;
  double w_neg = 0.0;
  double delta = 0.0;
  // Fraction of assignments changed since the previous step (0 on the first).
  double churn = 0.0;
  friend bool operator==(const LayerStepRecord&, const LayerStepRecord&) = default;
};

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  std::vector<LayerStepRecord> layers;
  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_error = 0.0;
  double val_loss = 0.0;
  double val_error = 0.0;
  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::vector<StepRecord> steps;

  // Running mean of the validation error over all epochs so far.
  std::vector<double> smoothed_val_errors() const;

  // One JSON object per line: {"type":"step",...} and {"type":"epoch",...}
  // records in the order they were produced.
  void write_jsonl(std::ostream& out) const;
  std::string to_jsonl() const;
  static TrainReport read_jsonl(std::istream& in);

  friend bool operator==(const TrainReport&, const TrainReport&) = default;
};

struct TrainResult {
  Model model;
  TrainReport report;
};

struct Evaluation {
  double loss = 0.0;
  double error = 0.0;
};

// Minibatch training. Weight decay applies to latent weights and biases only;
// codebooks are clamped positive after every step. Throws NonFiniteError when
// the loss or a parameter stops being finite.
TrainResult train(Model model, const DataSplit& data, const TrainConfig& cfg);

// Copies the latent weights and biases of `full` into a fresh model built from
// `target` (same geometry, new quantizer assignments), initializes codebooks
// from the copied weights, then trains. Throws ArchitectureMismatchError.
TrainResult finetune_from(const Model& full, const ModelSpec& target, const DataSplit& data,
                          const TrainConfig& cfg);
Model adopt_weights(const Model& full, const ModelSpec& target);

// Forward-only, eval mode; never mutates the model.
Evaluation evaluate(const Model& model, const Dataset& data, std::size_t batch_size = 256);
// Same metrics for any batch forward function producing [N x K] logits.
Evaluation evaluate_with(const std::function<Tensor(const Tensor&)>& forward, const Dataset& data,
                         std::size_t batch_size = 256);

struct SweepRow {
  double r = 0.0;
  double train_error = 0.0;
  double val_error = 0.0;
  // Parameter-weighted sparsity of the quantized layers at the end of training.
  double achieved_sparsity = 0.0;
};

// One run per target sparsity r under ConstantSparsity on every TTQ layer. All
// runs start from the same template weights and use the same seed; `threads`
// > 1 runs them concurrently with identical results.
std::vector<SweepRow> sparsity_sweep(const Model& template_model, const DataSplit& data,
                                     const std::vector<double>& r_values, const TrainConfig& cfg,
                                     std::size_t threads = 1);

}  // namespace ttq
