// Copyright 2026 The TTQ Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>

#include "ttq/tensor.hpp"

// Forward and backward numeric kernels. These are pure functions shared by
// the tape, the explicit layer backward in network.hpp and the reference
// paths of the inference runtime.
namespace ttq::ops {

// a[m x k] * b[k x n]
Tensor matmul(const Tensor& a, const Tensor& b);
// a[m x k] * b[n x k]^T
Tensor matmul_transposed_b(const Tensor& a, const Tensor& b);
// a[k x m]^T * b[k x n]
Tensor matmul_transposed_a(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

struct Conv2dGeometry {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// Output spatial extent of a convolution; throws DimensionError when the
// kernel exceeds the padded input.
std::size_t conv_output_extent(std::size_t input, std::size_t kernel, Conv2dGeometry geom);

// Cross-correlation with zero padding. input [N x C x H x W], kernel [F x C x kh x kw].
Tensor conv2d(const Tensor& input, const Tensor& kernel, Conv2dGeometry geom);
Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& kernel, const Shape& input_shape,
                             Conv2dGeometry geom);
Tensor conv2d_backward_kernel(const Tensor& grad_out, const Tensor& input, const Shape& kernel_shape,
                              Conv2dGeometry geom);

// out[n, j] = x[n, j] + bias[j] for rank-2 x; out[n, f, ...] += bias[f] for rank-4 x.
Tensor add_bias(const Tensor& x, const Tensor& bias);
// Reduction matching add_bias: sums the gradient over every axis but the bias axis.
Tensor bias_gradient(const Tensor& grad_out);

Tensor relu(const Tensor& x);
// grad masked by x > 0; the subgradient at exactly 0 is 0.
Tensor relu_backward(const Tensor& grad_out, const Tensor& x);

struct CrossEntropyResult {
  double loss = 0.0;
  Tensor grad;  // d loss / d logits
};

// Mean over the batch of -log softmax(logits)[label], max-subtracted.
// Throws IndexError for a label outside [0, K).
CrossEntropyResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

// Collapses every axis after the first: [N x ...] -> [N x prod(...)].
Tensor flatten_batch(const Tensor& x);

}  // namespace ttq::ops
