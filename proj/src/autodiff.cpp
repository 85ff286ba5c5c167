// Copyright 2026 The TTQ Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ttq/autodiff.hpp"

#include <string>

#include "ttq/errors.hpp"

namespace ttq::ad {

const Tensor& Var::value() const {
  if (tape_ == nullptr) {
    throw Error("value() on an unbound Var");
  }
  return tape_->value(*this);
}

bool GradientMap::contains(Var v) const {
  return v.id() < grads_.size() && grads_[v.id()].has_value();
}

const Tensor& GradientMap::at(Var v) const {
  if (!contains(v)) {
    throw IndexError("no gradient recorded for tape node " + std::to_string(v.id()));
  }
  return *grads_[v.id()];
}

void Tape::check_owned(Var v, const char* context) const {
  if (v.tape() != this || v.id() >= nodes_.size()) {
    throw Error(std::string(context) + ": variable does not belong to this tape");
  }
}

void Tape::check_fresh(const char* context) const {
  if (consumed_) {
    throw StaleTapeError(std::string(context) + ": tape already consumed by backward()");
  }
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  check_fresh("leaf");
  nodes_.push_back(Node{std::move(value), {}, nullptr, requires_grad});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  check_fresh("record");
  Node node{std::move(value), {}, std::move(backward), false};
  node.inputs.reserve(inputs.size());
  for (Var in : inputs) {
    check_owned(in, "record");
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (!node.requires_grad) {
    node.backward = nullptr;
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(Var v) const {
  check_owned(v, "value");
  return nodes_[v.id()].value;
}

bool Tape::requires_grad(Var v) const {
  check_owned(v, "requires_grad");
  return nodes_[v.id()].requires_grad;
}

GradientMap Tape::backward(Var loss) {
  check_fresh("backward");
  check_owned(loss, "backward");
  const Tensor& loss_value = nodes_[loss.id()].value;
  if (loss_value.size() != 1) {
    throw DimensionError("backward() needs a scalar loss, got shape " +
                         shape_to_string(loss_value.shape()));
  }
  consumed_ = true;

  GradientMap result;
  result.grads_.resize(nodes_.size());
  auto& grads = result.grads_;
  grads[loss.id()] = ones_like(loss_value);

  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!grads[id].has_value() || !node.requires_grad) {
      continue;
    }
    if (!node.backward) {
      continue;  // leaf
    }
    std::vector<std::optional<Tensor>> input_grads = node.backward(*grads[id]);
    if (input_grads.size() != node.inputs.size()) {
      throw Error("backward function returned " + std::to_string(input_grads.size()) +
                  " gradients for " + std::to_string(node.inputs.size()) + " inputs");
    }
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const std::size_t in = node.inputs[k];
      if (!input_grads[k].has_value() || !nodes_[in].requires_grad) {
        continue;
      }
      require_same_shape(input_grads[k]->shape(), nodes_[in].value.shape(), "backward");
      if (grads[in].has_value()) {
        auto acc = grads[in]->data();
        auto add = input_grads[k]->data();
        for (std::size_t i = 0; i < acc.size(); ++i) {
          acc[i] += add[i];
        }
      } else {
        grads[in] = std::move(input_grads[k]);
      }
    }
    // Interior gradients are not needed once propagated.
    grads[id].reset();
  }
  // The loss gradient itself is only meaningful when the loss is a leaf.
  if (nodes_[loss.id()].backward) {
    grads[loss.id()].reset();
  }
  return result;
}

Var matmul(Var a, Var b) {
  Tape& tape = *a.tape();
  Tensor out = ops::matmul(a.value(), b.value());
  return tape.record(std::move(out), {a, b}, [a, b](const Tensor& g) {
    return std::vector<std::optional<Tensor>>{ops::matmul_transposed_b(g, b.value()),
                                              ops::matmul_transposed_a(a.value(), g)};
  });
}

Var transpose(Var a) {
  Tape& tape = *a.tape();
  return tape.record(ops::transpose(a.value()), {a}, [](const Tensor& g) {
    return std::vector<std::optional<Tensor>>{ops::transpose(g)};
  });
}

Var conv2d(Var input, Var kernel, ops::Conv2dGeometry geom) {
  Tape& tape = *input.tape();
  Tensor out = ops::conv2d(input.value(), kernel.value(), geom);
  return tape.record(std::move(out), {input, kernel}, [input, kernel, geom](const Tensor& g) {
    std::vector<std::optional<Tensor>> grads(2);
    if (input.tape()->requires_grad(input)) {
      grads[0] = ops::conv2d_backward_input(g, kernel.value(), input.shape(), geom);
    }
    if (kernel.tape()->requires_grad(kernel)) {
      grads[1] = ops::conv2d_backward_kernel(g, input.value(), kernel.shape(), geom);
    }
    return grads;
  });
}

Var add(Var a, Var b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor out = a.value();
  auto o = out.data();
  auto y = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] += y[i];
  }
  return a.tape()->record(std::move(out), {a, b}, [](const Tensor& g) {
    return std::vector<std::optional<Tensor>>{g, g};
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor out = a.value();
  auto o = out.data();
  auto y = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] *= y[i];
  }
  return a.tape()->record(std::move(out), {a, b}, [a, b](const Tensor& g) {
    Tensor ga = g;
    Tensor gb = g;
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] *= b.value()[i];
      gb[i] *= a.value()[i];
    }
    return std::vector<std::optional<Tensor>>{std::move(ga), std::move(gb)};
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (double& v : out.data()) {
    v *= factor;
  }
  return a.tape()->record(std::move(out), {a}, [factor](const Tensor& g) {
    Tensor ga = g;
    for (double& v : ga.data()) {
      v *= factor;
    }
    return std::vector<std::optional<Tensor>>{std::move(ga)};
  });
}

Var add_bias(Var x, Var bias) {
  Tensor out = ops::add_bias(x.value(), bias.value());
  return x.tape()->record(std::move(out), {x, bias}, [](const Tensor& g) {
    return std::vector<std::optional<Tensor>>{g, ops::bias_gradient(g)};
  });
}

Var relu(Var x) {
  return x.tape()->record(ops::relu(x.value()), {x}, [x](const Tensor& g) {
    return std::vector<std::optional<Tensor>>{ops::relu_backward(g, x.value())};
  });
}

Var sum(Var x) {
  Shape shape = x.shape();
  return x.tape()->record(Tensor::scalar(x.value().sum()), {x}, [shape](const Tensor& g) {
    return std::vector<std::optional<Tensor>>{Tensor(shape, g.item())};
  });
}

Var flatten_batch(Var x) {
  Shape shape = x.shape();
  return x.tape()->record(ops::flatten_batch(x.value()), {x}, [shape](const Tensor& g) {
    return std::vector<std::optional<Tensor>>{g.reshaped(shape)};
  });
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  ops::CrossEntropyResult r = ops::softmax_cross_entropy(logits.value(), labels);
  Tensor grad = std::move(r.grad);
  return logits.tape()->record(Tensor::scalar(r.loss), {logits},
                               [grad = std::move(grad)](const Tensor& g) {
                                 Tensor gl = grad;
                                 const double s = g.item();
                                 for (double& v : gl.data()) {
                                   v *= s;
                                 }
                                 return std::vector<std::optional<Tensor>>{std::move(gl)};
                               });
}

}  // namespace ttq::ad
