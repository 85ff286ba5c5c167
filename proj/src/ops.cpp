// Copyright 2026 The TTQ Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ttq/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ttq/errors.hpp"

namespace ttq::ops {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(what) + " expects rank " + std::to_string(rank) +
                         ", got shape " + shape_to_string(t.shape()));
  }
}

struct ConvDims {
  std::size_t n, c, h, w, f, kh, kw, oh, ow;
};

ConvDims conv_dims(const Shape& input, const Shape& kernel, Conv2dGeometry geom) {
  if (input.size() != 4 || kernel.size() != 4) {
    throw DimensionError("conv2d expects 4-d input and kernel, got " + shape_to_string(input) +
                         " and " + shape_to_string(kernel));
  }
  if (input[1] != kernel[1]) {
    throw DimensionError("conv2d channel mismatch: input " + shape_to_string(input) +
                         ", kernel " + shape_to_string(kernel));
  }
  ConvDims d{};
  d.n = input[0];
  d.c = input[1];
  d.h = input[2];
  d.w = input[3];
  d.f = kernel[0];
  d.kh = kernel[2];
  d.kw = kernel[3];
  d.oh = conv_output_extent(d.h, d.kh, geom);
  d.ow = conv_output_extent(d.w, d.kw, geom);
  return d;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0);
  const std::size_t k = a.dim(1);
  const std::size_t n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul inner dimensions disagree: " + shape_to_string(a.shape()) +
                         " * " + shape_to_string(b.shape()));
  }
  Tensor out({m, n});
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = x[i * k + p];
      const double* brow = &y[p * n];
      double* orow = &o[i * n];
      for (std::size_t j = 0; j < n; ++j) {
        orow[j] += av * brow[j];
      }
    }
  }
  return out;
}

Tensor matmul_transposed_b(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_transposed_b");
  require_rank(b, 2, "matmul_transposed_b");
  const std::size_t m = a.dim(0);
  const std::size_t k = a.dim(1);
  const std::size_t n = b.dim(0);
  if (b.dim(1) != k) {
    throw DimensionError("matmul inner dimensions disagree: " + shape_to_string(a.shape()) +
                         " * " + shape_to_string(b.shape()) + "^T");
  }
  Tensor out({m, n});
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        acc += x[i * k + p] * y[j * k + p];
      }
      o[i * n + j] = acc;
    }
  }
  return out;
}

Tensor matmul_transposed_a(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_transposed_a");
  require_rank(b, 2, "matmul_transposed_a");
  const std::size_t k = a.dim(0);
  const std::size_t m = a.dim(1);
  const std::size_t n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul inner dimensions disagree: " + shape_to_string(a.shape()) +
                         "^T * " + shape_to_string(b.shape()));
  }
  Tensor out({m, n});
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t i = 0; i < m; ++i) {
      const double av = x[p * m + i];
      const double* brow = &y[p * n];
      double* orow = &o[i * n];
      for (std::size_t j = 0; j < n; ++j) {
        orow[j] += av * brow[j];
      }
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0);
  const std::size_t n = a.dim(1);
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out[j * m + i] = a[i * n + j];
    }
  }
  return out;
}

std::size_t conv_output_extent(std::size_t input, std::size_t kernel, Conv2dGeometry geom) {
  if (geom.stride == 0) {
    throw DimensionError("conv2d stride must be positive");
  }
  const std::size_t padded = input + 2 * geom.padding;
  if (kernel > padded) {
    throw DimensionError("conv2d kernel extent " + std::to_string(kernel) +
                         " exceeds padded input extent " + std::to_string(padded));
  }
  return (padded - kernel) / geom.stride + 1;
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, Conv2dGeometry geom) {
  const ConvDims d = conv_dims(input.shape(), kernel.shape(), geom);
  Tensor out({d.n, d.f, d.oh, d.ow});
  auto o = out.data();
  auto x = input.data();
  auto k = kernel.data();
  const auto pad = static_cast<std::ptrdiff_t>(geom.padding);
  const auto stride = static_cast<std::ptrdiff_t>(geom.stride);
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t f = 0; f < d.f; ++f) {
      double* omap = &o[(n * d.f + f) * d.oh * d.ow];
      for (std::size_t c = 0; c < d.c; ++c) {
        const double* imap = &x[(n * d.c + c) * d.h * d.w];
        for (std::size_t ky = 0; ky < d.kh; ++ky) {
          for (std::size_t kx = 0; kx < d.kw; ++kx) {
            const double wv = k[((f * d.c + c) * d.kh + ky) * d.kw + kx];
            for (std::size_t oy = 0; oy < d.oh; ++oy) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * stride +
                                        static_cast<std::ptrdiff_t>(ky) - pad;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) {
                continue;
              }
              for (std::size_t ox = 0; ox < d.ow; ++ox) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * stride +
                                          static_cast<std::ptrdiff_t>(kx) - pad;
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(d.w)) {
                  continue;
                }
                omap[oy * d.ow + ox] += wv * imap[static_cast<std::size_t>(iy) * d.w +
                                                  static_cast<std::size_t>(ix)];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& kernel, const Shape& input_shape,
                             Conv2dGeometry geom) {
  const ConvDims d = conv_dims(input_shape, kernel.shape(), geom);
  require_same_shape(grad_out.shape(), Shape{d.n, d.f, d.oh, d.ow}, "conv2d_backward_input");
  Tensor grad_in(input_shape);
  auto gi = grad_in.data();
  auto g = grad_out.data();
  auto k = kernel.data();
  const auto pad = static_cast<std::ptrdiff_t>(geom.padding);
  const auto stride = static_cast<std::ptrdiff_t>(geom.stride);
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t f = 0; f < d.f; ++f) {
      const double* gmap = &g[(n * d.f + f) * d.oh * d.ow];
      for (std::size_t c = 0; c < d.c; ++c) {
        double* imap = &gi[(n * d.c + c) * d.h * d.w];
        for (std::size_t ky = 0; ky < d.kh; ++ky) {
          for (std::size_t kx = 0; kx < d.kw; ++kx) {
            const double wv = k[((f * d.c + c) * d.kh + ky) * d.kw + kx];
            for (std::size_t oy = 0; oy < d.oh; ++oy) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * stride +
                                        static_cast<std::ptrdiff_t>(ky) - pad;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) {
                continue;
              }
              for (std::size_t ox = 0; ox < d.ow; ++ox) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * stride +
                                          static_cast<std::ptrdiff_t>(kx) - pad;
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(d.w)) {
                  continue;
                }
                imap[static_cast<std::size_t>(iy) * d.w + static_cast<std::size_t>(ix)] +=
                    wv * gmap[oy * d.ow + ox];
              }
            }
          }
        }
      }
    }
  }
  return grad_in;
}

Tensor conv2d_backward_kernel(const Tensor& grad_out, const Tensor& input, const Shape& kernel_shape,
                              Conv2dGeometry geom) {
  const ConvDims d = conv_dims(input.shape(), kernel_shape, geom);
  require_same_shape(grad_out.shape(), Shape{d.n, d.f, d.oh, d.ow}, "conv2d_backward_kernel");
  Tensor grad_k(kernel_shape);
  auto gk = grad_k.data();
  auto g = grad_out.data();
  auto x = input.data();
  const auto pad = static_cast<std::ptrdiff_t>(geom.padding);
  const auto stride = static_cast<std::ptrdiff_t>(geom.stride);
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t f = 0; f < d.f; ++f) {
      const double* gmap = &g[(n * d.f + f) * d.oh * d.ow];
      for (std::size_t c = 0; c < d.c; ++c) {
        const double* imap = &x[(n * d.c + c) * d.h * d.w];
        for (std::size_t ky = 0; ky < d.kh; ++ky) {
          for (std::size_t kx = 0; kx < d.kw; ++kx) {
            double acc = 0.0;
            for (std::size_t oy = 0; oy < d.oh; ++oy) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * stride +
                                        static_cast<std::ptrdiff_t>(ky) - pad;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) {
                continue;
              }
              for (std::size_t ox = 0; ox < d.ow; ++ox) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * stride +
                                          static_cast<std::ptrdiff_t>(kx) - pad;
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(d.w)) {
                  continue;
                }
                acc += gmap[oy * d.ow + ox] *
                       imap[static_cast<std::size_t>(iy) * d.w + static_cast<std::size_t>(ix)];
              }
            }
            gk[((f * d.c + c) * d.kh + ky) * d.kw + kx] += acc;
          }
        }
      }
    }
  }
  return grad_k;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.rank() != 1) {
    throw DimensionError("bias must be 1-d, got " + shape_to_string(bias.shape()));
  }
  if (x.rank() < 2 || x.dim(1) != bias.dim(0)) {
    throw DimensionError("bias " + shape_to_string(bias.shape()) + " does not match " +
                         shape_to_string(x.shape()));
  }
  Tensor out = x;
  const std::size_t n = x.dim(0);
  const std::size_t channels = x.dim(1);
  const std::size_t inner = x.size() / (n * channels);
  auto o = out.data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double bv = bias[c];
      double* row = &o[(b * channels + c) * inner];
      for (std::size_t i = 0; i < inner; ++i) {
        row[i] += bv;
      }
    }
  }
  return out;
}

Tensor bias_gradient(const Tensor& grad_out) {
  if (grad_out.rank() < 2) {
    throw DimensionError("bias_gradient expects rank >= 2, got " +
                         shape_to_string(grad_out.shape()));
  }
  const std::size_t n = grad_out.dim(0);
  const std::size_t channels = grad_out.dim(1);
  const std::size_t inner = grad_out.size() / (n * channels);
  Tensor g({channels});
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double* row = &grad_out.data()[(b * channels + c) * inner];
      double acc = 0.0;
      for (std::size_t i = 0; i < inner; ++i) {
        acc += row[i];
      }
      g[c] += acc;
    }
  }
  return g;
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.data()) {
    v = v > 0.0 ? v : 0.0;
  }
  return out;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& x) {
  require_same_shape(grad_out.shape(), x.shape(), "relu_backward");
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(x[i] > 0.0)) {
      g[i] = 0.0;
    }
  }
  return g;
}

CrossEntropyResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_cross_entropy");
  const std::size_t n = logits.dim(0);
  const std::size_t k = logits.dim(1);
  if (labels.size() != n) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for batch of " + std::to_string(n));
  }
  CrossEntropyResult result{0.0, Tensor({n, k})};
  auto grad = result.grad.data();
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw IndexError("label " + std::to_string(label) + " out of range [0, " +
                       std::to_string(k) + ")");
    }
    const double* row = &logits.data()[i * k];
    double row_max = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) {
      row_max = std::max(row_max, row[j]);
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      denom += std::exp(row[j] - row_max);
    }
    const double log_denom = std::log(denom);
    result.loss += -(row[label] - row_max - log_denom) * inv_n;
    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::exp(row[j] - row_max - log_denom);
      grad[i * k + j] = (p - (static_cast<std::size_t>(label) == j ? 1.0 : 0.0)) * inv_n;
    }
  }
  return result;
}

Tensor flatten_batch(const Tensor& x) {
  if (x.rank() < 1) {
    throw DimensionError("flatten_batch needs a batch axis");
  }
  const std::size_t n = x.dim(0);
  return x.reshaped(Shape{n, x.size() / n});
}

}  // namespace ttq::ops
