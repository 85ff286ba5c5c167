// Copyright 2026 The TTQ Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "ttq/ops.hpp"
#include "ttq/tensor.hpp"

// Dynamic reverse-mode tape. A tape is rebuilt for every forward pass and
// supports exactly one backward pass; it is single-threaded, but independent
// tapes share no state.
namespace ttq::ad {

class Tape;

// Handle to a value recorded on a tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Maps each input's gradient from the output gradient. A disengaged entry means
// the op does not propagate to that input.
using BackwardFn = std::function<std::vector<std::optional<Tensor>>(const Tensor& grad_out)>;

class GradientMap {
 public:
  bool contains(Var v) const;
  // Gradient of the loss with respect to `v`; throws IndexError if `v` received none.
  const Tensor& at(Var v) const;

 private:
  friend class Tape;
  std::vector<std::optional<Tensor>> grads_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Parameters and inputs. Gradients are retained for leaves that require them.
  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  // Records a primitive whose inputs were all produced earlier on this tape.
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                  std::move(backward));
  }

  // Reverse sweep from a scalar loss. Consumes the tape: a second call, or any
  // further recording, throws StaleTapeError.
  GradientMap backward(Var loss);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  void check_owned(Var v, const char* context) const;
  void check_fresh(const char* context) const;

  std::deque<Node> nodes_;
  bool consumed_ = false;
};

Var matmul(Var a, Var b);
Var transpose(Var a);
Var conv2d(Var input, Var kernel, ops::Conv2dGeometry geom);
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_bias(Var x, Var bias);
Var relu(Var x);
Var sum(Var x);
Var flatten_batch(Var x);
// Scalar mean cross-entropy over the batch.
Var softmax_cross_entropy(Var logits, std::span<const int> labels);

}  // namespace ttq::ad
