// Copyright 2026 The TTQ Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

namespace ttq {

struct SgdConfig {
  double lr = 0.1;
  double momentum = 0.9;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

using OptimizerConfig = std::variant<SgdConfig, AdamConfig>;

double base_learning_rate(const OptimizerConfig& cfg);

// Multiply the learning rate by `multiplier` from `epoch` on (0-based).
struct LrMilestone {
  std::size_t epoch = 0;
  double multiplier = 1.0;
};

double scheduled_learning_rate(double base, std::span<const LrMilestone> schedule,
                               std::size_t epoch);

// Per-parameter state is keyed by a slot index the caller keeps stable.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

  void step(std::size_t slot, std::span<double> param, std::span<const double> grad, double lr);

 private:
  struct Slot {
    std::vector<double> m;
    std::vector<double> v;
    std::size_t t = 0;
  };

  Slot& slot(std::size_t index, std::size_t size);

  OptimizerConfig cfg_;
  std::vector<Slot> slots_;
};

}  // namespace ttq
