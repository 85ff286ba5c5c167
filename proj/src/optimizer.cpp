// Copyright 2026 The TTQ Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ttq/optimizer.hpp"

#include <cmath>

#include "ttq/errors.hpp"

namespace ttq {

double base_learning_rate(const OptimizerConfig& cfg) {
  return std::visit([](const auto& c) { return c.lr; }, cfg);
}

double scheduled_learning_rate(double base, std::span<const LrMilestone> schedule,
                               std::size_t epoch) {
  double lr = base;
  for (const auto& m : schedule) {
    if (epoch >= m.epoch) {
      lr *= m.multiplier;
    }
  }
  return lr;
}

Optimizer::Slot& Optimizer::slot(std::size_t index, std::size_t size) {
  if (index >= slots_.size()) {
    slots_.resize(index + 1);
  }
  Slot& s = slots_[index];
  if (s.m.empty()) {
    s.m.assign(size, 0.0);
    s.v.assign(size, 0.0);
  } else if (s.m.size() != size) {
    throw DimensionError("optimizer slot " + std::to_string(index) + " changed size");
  }
  return s;
}

void Optimizer::step(std::size_t index, std::span<double> param, std::span<const double> grad,
                     double lr) {
  if (param.size() != grad.size()) {
    throw DimensionError("optimizer: parameter and gradient sizes differ");
  }
  Slot& s = slot(index, param.size());
  if (const auto* sgd = std::get_if<SgdConfig>(&cfg_)) {
    for (std::size_t i = 0; i < param.size(); ++i) {
      s.m[i] = sgd->momentum * s.m[i] + grad[i];
      param[i] -= lr * s.m[i];
    }
    return;
  }
  const auto& adam = std::get<AdamConfig>(cfg_);
  ++s.t;
  const double t = static_cast<double>(s.t);
  const double c1 = 1.0 - std::pow(adam.beta1, t);
  const double c2 = 1.0 - std::pow(adam.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    s.m[i] = adam.beta1 * s.m[i] + (1.0 - adam.beta1) * grad[i];
    s.v[i] = adam.beta2 * s.v[i] + (1.0 - adam.beta2) * grad[i] * grad[i];
    const double m_hat = s.m[i] / c1;
    const double v_hat = s.v[i] / c2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + adam.eps);
  }
}

}  // namespace ttq
