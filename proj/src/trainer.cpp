// Copyright 2026 The TTQ Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ttq/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "ttq/autodiff.hpp"
#include "ttq/errors.hpp"
#include "ttq/ops.hpp"

namespace ttq {

void validate(const TrainConfig& cfg) {
  const double lr = base_learning_rate(cfg.optimizer);
  if (!(lr >= 0.0) || !std::isfinite(lr)) {
    throw ConfigError("learning rate must be finite and non-negative");
  }
  if (const auto* sgd = std::get_if<SgdConfig>(&cfg.optimizer)) {
    if (!(sgd->momentum >= 0.0 && sgd->momentum < 1.0)) {
      throw ConfigError("SGD momentum must lie in [0, 1)");
    }
  } else {
    const auto& a = std::get<AdamConfig>(cfg.optimizer);
    if (!(a.beta1 >= 0.0 && a.beta1 < 1.0) || !(a.beta2 >= 0.0 && a.beta2 < 1.0) ||
        !(a.eps > 0.0)) {
      throw ConfigError("Adam needs beta1, beta2 in [0, 1) and eps > 0");
    }
  }
  if (cfg.batch_size == 0) {
    throw ConfigError("batch_size must be at least 1");
  }
  if (!(cfg.weight_decay >= 0.0)) {
    throw ConfigError("weight_decay must be non-negative");
  }
  if (!(cfg.codebook_lr_multiplier >= 0.0)) {
    throw ConfigError("codebook_lr_multiplier must be non-negative");
  }
  for (std::size_t i = 0; i < cfg.lr_schedule.size(); ++i) {
    if (i > 0 && cfg.lr_schedule[i].epoch <= cfg.lr_schedule[i - 1].epoch) {
      throw ConfigError("lr_schedule epochs must be strictly increasing");
    }
    if (!(cfg.lr_schedule[i].multiplier > 0.0)) {
      throw ConfigError("lr_schedule multipliers must be positive");
    }
  }
}

std::vector<double> TrainReport::smoothed_val_errors() const {
  std::vector<double> out;
  out.reserve(epochs.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    acc += epochs[i].val_error;
    out.push_back(acc / static_cast<double>(i + 1));
  }
  return out;
}

namespace {

void check_data(const Model& model, const Dataset& data, const char* which) {
  if (data.size() == 0) {
    throw ConfigError(std::string(which) + " dataset is empty");
  }
  if (data.sample_shape() != model.spec().input_shape) {
    throw DimensionError(std::string(which) + " samples have shape " +
                         shape_to_string(data.sample_shape()) + " but the model expects " +
                         shape_to_string(model.spec().input_shape));
  }
  if (data.num_classes > model.num_classes()) {
    throw DimensionError(std::string(which) + " dataset has " + std::to_string(data.num_classes) +
                         " classes but the model emits " + std::to_string(model.num_classes()));
  }
}

std::ptrdiff_t first_nonfinite_layer(const Model& model) {
  const auto& layers = model.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const QuantizedLayer& l = layers[i];
    bool ok = l.latent_weights.all_finite() && (!l.bias || l.bias->all_finite());
    if (l.codebook) {
      ok = ok && std::isfinite(l.codebook->w_pos) && std::isfinite(l.codebook->w_neg);
    }
    if (!ok) {
      return static_cast<std::ptrdiff_t>(i);
    }
  }
  return -1;
}

std::size_t argmax_row(const Tensor& logits, std::size_t row) {
  const std::size_t k = logits.dim(1);
  const double* p = &logits.data()[row * k];
  return static_cast<std::size_t>(std::max_element(p, p + k) - p);
}

}  // namespace

TrainResult train(Model model, const DataSplit& data, const TrainConfig& cfg) {
  validate(cfg);
  check_data(model, data.train, "train");
  if (data.val.size() > 0) {
    check_data(model, data.val, "val");
  }

  TrainResult result;
  Optimizer optimizer(cfg.optimizer);
  Rng rng(cfg.seed);
  const double base_lr = base_learning_rate(cfg.optimizer);
  const std::size_t n = data.train.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::optional<TernaryPartition>> previous(model.layers().size());

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = scheduled_learning_rate(base_lr, cfg.lr_schedule, epoch);
    shuffle(order, rng);
    for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
      const std::size_t end = std::min(n, begin + cfg.batch_size);
      const Dataset batch =
          data.train.gather(std::span<const std::size_t>(order).subspan(begin, end - begin));

      ad::Tape tape;
      const QuantizeContext ctx{Mode::Train, &rng};
      TapeForward f = record_forward(tape, model, batch.inputs, ctx, cfg.grad_convention);
      ad::Var loss = ad::softmax_cross_entropy(f.logits, batch.labels);
      const double loss_value = loss.value().item();
      if (!std::isfinite(loss_value)) {
        throw NonFiniteError("non-finite loss at step " + std::to_string(step) + " (epoch " +
                                 std::to_string(epoch) + ")",
                             step, first_nonfinite_layer(model));
      }
      const ad::GradientMap grads = tape.backward(loss);

      if (cfg.record_steps) {
        StepRecord rec{step, epoch, loss_value, lr, {}};
        for (std::size_t i = 0; i < model.layers().size(); ++i) {
          const QuantizedLayer& layer = model.layers()[i];
          const MaterializedWeights& m = f.weights[i];
          if (layer.quantizer == QuantizerKind::None || !m.partition) {
            continue;
          }
          LayerStepRecord lr_rec;
          lr_rec.layer = i;
          lr_rec.quantizer = layer.quantizer;
          lr_rec.weights = m.partition->size();
          lr_rec.sparsity = m.partition->sparsity();
          lr_rec.w_pos = m.codebook->w_pos;
          lr_rec.w_neg = m.codebook->w_neg;
          lr_rec.delta = m.delta;
          lr_rec.churn = previous[i] ? assignment_churn(*previous[i], *m.partition) : 0.0;
          rec.layers.push_back(lr_rec);
          previous[i] = m.partition;
        }
        result.report.steps.push_back(std::move(rec));
      }

      std::size_t slot = 0;
      for (std::size_t i = 0; i < model.layers().size(); ++i) {
        QuantizedLayer& layer = model.layers()[i];
        const LayerVars& vars = f.params[i];
        auto decayed_step = [&](Tensor& param, ad::Var var) {
          Tensor g = grads.contains(var) ? grads.at(var) : zeros_like(param);
          if (cfg.weight_decay > 0.0) {
            for (std::size_t k = 0; k < g.size(); ++k) {
              g[k] += cfg.weight_decay * param[k];
            }
          }
          optimizer.step(slot++, param.data(), g.data(), lr);
        };
        decayed_step(layer.latent_weights, vars.latent);
        if (layer.bias) {
          decayed_step(*layer.bias, *vars.bias);
        }
        if (layer.quantizer == QuantizerKind::TTQ) {
          const double cb_lr = lr * cfg.codebook_lr_multiplier;
          const double gp = grads.contains(*vars.w_pos) ? grads.at(*vars.w_pos).item() : 0.0;
          const double gn = grads.contains(*vars.w_neg) ? grads.at(*vars.w_neg).item() : 0.0;
          optimizer.step(slot++, std::span<double>(&layer.codebook->w_pos, 1),
                         std::span<const double>(&gp, 1), cb_lr);
          optimizer.step(slot++, std::span<double>(&layer.codebook->w_neg, 1),
                         std::span<const double>(&gn, 1), cb_lr);
          layer.codebook->clamp();
        }
      }
      const std::ptrdiff_t bad = first_nonfinite_layer(model);
      if (bad >= 0) {
        throw NonFiniteError("non-finite parameters in layer " + std::to_string(bad) +
                                 " after step " + std::to_string(step),
                             step, bad);
      }
      ++step;
    }

    EpochRecord er;
    er.epoch = epoch;
    er.lr = lr;
    const Evaluation tr = evaluate(model, data.train);
    er.train_loss = tr.loss;
    er.train_error = tr.error;
    if (data.val.size() > 0) {
      const Evaluation va = evaluate(model, data.val);
      er.val_loss = va.loss;
      er.val_error = va.error;
    }
    result.report.epochs.push_back(er);
  }
  result.model = std::move(model);
  return result;
}

Model adopt_weights(const Model& full, const ModelSpec& target) {
  if (!same_architecture(full.spec(), target)) {
    throw ArchitectureMismatchError(
        "finetune: source and target architectures differ (input shape or layer geometry)");
  }
  std::vector<QuantizedLayer> layers;
  for (std::size_t i = 0; i < full.layers().size(); ++i) {
    QuantizedLayer l;
    l.kind = full.layers()[i].kind;
    l.latent_weights = full.layers()[i].latent_weights;
    l.bias = full.layers()[i].bias;
    l.quantizer = resolved_quantizer(target, i);
    l.policy = resolved_policy(target, i);
    layers.push_back(std::move(l));
  }
  Model m = Model::from_layers(target, std::move(layers));
  m.init_codebooks();
  return m;
}

TrainResult finetune_from(const Model& full, const ModelSpec& target, const DataSplit& data,
                          const TrainConfig& cfg) {
  return train(adopt_weights(full, target), data, cfg);
}

Evaluation evaluate(const Model& model, const Dataset& data, std::size_t batch_size) {
  if (data.size() == 0) {
    return {};
  }
  check_data(model, data, "eval");
  return evaluate_with([&](const Tensor& x) { return model.forward(x); }, data, batch_size);
}

Evaluation evaluate_with(const std::function<Tensor(const Tensor&)>& forward, const Dataset& data,
                         std::size_t batch_size) {
  if (data.size() == 0) {
    return {};
  }
  double loss = 0.0;
  std::size_t wrong = 0;
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    const std::size_t end = std::min(data.size(), begin + batch_size);
    idx.resize(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    const Dataset batch = data.gather(idx);
    const Tensor logits = forward(batch.inputs);
    const ops::CrossEntropyResult ce = ops::softmax_cross_entropy(logits, batch.labels);
    loss += ce.loss * static_cast<double>(batch.size());
    for (std::size_t r = 0; r < batch.size(); ++r) {
      if (argmax_row(logits, r) != static_cast<std::size_t>(batch.labels[r])) {
        ++wrong;
      }
    }
  }
  const double n = static_cast<double>(data.size());
  return Evaluation{loss / n, static_cast<double>(wrong) / n};
}

std::vector<SweepRow> sparsity_sweep(const Model& template_model, const DataSplit& data,
                                     const std::vector<double>& r_values, const TrainConfig& cfg,
                                     std::size_t threads) {
  for (double r : r_values) {
    validate_policy(ConstantSparsity{r});
  }
  std::vector<SweepRow> rows(r_values.size());
  auto run_one = [&](std::size_t k) {
    Model m = template_model;
    for (auto& l : m.layers()) {
      if (l.quantizer == QuantizerKind::TTQ) {
        l.policy = ConstantSparsity{r_values[k]};
      }
    }
    TrainResult res = train(std::move(m), data, cfg);
    SweepRow row;
    row.r = r_values[k];
    const Evaluation tr = evaluate(res.model, data.train);
    row.train_error = tr.error;
    row.val_error = data.val.size() > 0 ? evaluate(res.model, data.val).error : tr.error;
    std::size_t zeros = 0;
    std::size_t total = 0;
    const auto parts = res.model.partitions();
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (parts[i] && res.model.layers()[i].quantizer == QuantizerKind::TTQ) {
        zeros += parts[i]->count_zero();
        total += parts[i]->size();
      }
    }
    row.achieved_sparsity = total == 0 ? 0.0 : static_cast<double>(zeros) / static_cast<double>(total);
    rows[k] = row;
  };

  threads = std::max<std::size_t>(1, std::min(threads, r_values.size()));
  if (threads == 1) {
    for (std::size_t k = 0; k < r_values.size(); ++k) {
      run_one(k);
    }
    return rows;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t k = next++; k < r_values.size(); k = next++) {
        try {
          run_one(k);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) {
            failure = std::current_exception();
          }
        }
      }
    });
  }
  for (auto& th : pool) {
    th.join();
  }
  if (failure) {
    std::rethrow_exception(failure);
  }
  return rows;
}

}  // namespace ttq
