// Copyright 2026 The TTQ Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ttq/datasets.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

#include "ttq/errors.hpp"
#include "ttq/random.hpp"

namespace ttq {

Shape Dataset::sample_shape() const {
  const Shape& s = inputs.shape();
  return Shape(s.begin() + 1, s.end());
}

Dataset Dataset::gather(std::span<const std::size_t> indices) const {
  const Shape sample = sample_shape();
  const std::size_t stride = shape_numel(sample);
  Shape shape{indices.size()};
  shape.insert(shape.end(), sample.begin(), sample.end());
  Tensor batch(shape);
  std::vector<int> labels_out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    if (src >= size()) {
      throw IndexError("sample index " + std::to_string(src) + " out of range");
    }
    std::copy_n(inputs.data().begin() + static_cast<std::ptrdiff_t>(src * stride), stride,
                batch.data().begin() + static_cast<std::ptrdiff_t>(i * stride));
    labels_out[i] = labels[src];
  }
  return Dataset{std::move(batch), std::move(labels_out), num_classes};
}

namespace {

// Balanced labels in a shuffled order.
std::vector<int> balanced_labels(std::size_t n, std::size_t classes, Rng& rng) {
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<int>(i % classes);
  }
  shuffle(labels, rng);
  return labels;
}

void require_nonempty(std::size_t n, std::size_t classes) {
  if (n == 0 || classes == 0) {
    throw ConfigError("dataset needs at least one sample and one class");
  }
}

}  // namespace

Dataset make_blobs(std::size_t n, std::size_t classes, double spread, std::uint64_t seed,
                   std::size_t dims, double radius) {
  require_nonempty(n, classes);
  if (dims < 2) {
    throw ConfigError("blobs need at least 2 dimensions");
  }
  Rng rng(seed);
  std::vector<int> labels = balanced_labels(n, classes, rng);
  Tensor x({n, dims});
  for (std::size_t i = 0; i < n; ++i) {
    const double angle =
        2.0 * std::numbers::pi * static_cast<double>(labels[i]) / static_cast<double>(classes);
    for (std::size_t d = 0; d < dims; ++d) {
      double center = 0.0;
      if (d == 0) {
        center = radius * std::cos(angle);
      } else if (d == 1) {
        center = radius * std::sin(angle);
      }
      x[i * dims + d] = center + spread * rng.normal();
    }
  }
  return Dataset{std::move(x), std::move(labels), classes};
}

Dataset make_moons(std::size_t n, double noise, std::uint64_t seed) {
  require_nonempty(n, 2);
  Rng rng(seed);
  std::vector<int> labels = balanced_labels(n, 2, rng);
  Tensor x({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    const double t = std::numbers::pi * rng.uniform();
    double px = std::cos(t);
    double py = std::sin(t);
    if (labels[i] == 1) {
      px = 1.0 - px;
      py = 0.5 - py;
    }
    x[i * 2] = px + noise * rng.normal();
    x[i * 2 + 1] = py + noise * rng.normal();
  }
  return Dataset{std::move(x), std::move(labels), 2};
}

namespace {

void draw_pattern(std::span<double> img, std::size_t side, int cls, Rng& rng) {
  const auto s = static_cast<int>(side);
  auto put = [&](int y, int x, double v) {
    if (y >= 0 && y < s && x >= 0 && x < s) {
      img[static_cast<std::size_t>(y * s + x)] = v;
    }
  };
  const double ink = 0.6 + 0.4 * rng.uniform();
  const int off = static_cast<int>(rng.index(3)) - 1;
  const int pos = 1 + static_cast<int>(rng.index(side - 2));
  const int start = static_cast<int>(rng.index(2));
  const int stop = s - static_cast<int>(rng.index(2));
  switch (cls) {
    case 0:  // horizontal bar
      for (int x = start; x < stop; ++x) put(pos, x, ink);
      break;
    case 1:  // vertical bar
      for (int y = start; y < stop; ++y) put(y, pos, ink);
      break;
    case 2:  // diagonal
      for (int i = start; i < stop; ++i) put(i, i + off, ink);
      break;
    case 3:  // anti-diagonal
      for (int i = start; i < stop; ++i) put(i, s - 1 - i + off, ink);
      break;
    case 4:  // cross
      for (int i = start; i < stop; ++i) {
        put(i, i + off, ink);
        put(i, s - 1 - i + off, ink);
      }
      break;
    case 5: {  // box outline
      const int lo = 1 + static_cast<int>(rng.index(2));
      const int hi = s - 2 - static_cast<int>(rng.index(2));
      for (int i = lo; i <= hi; ++i) {
        put(lo, i, ink);
        put(hi, i, ink);
        put(i, lo, ink);
        put(i, hi, ink);
      }
      break;
    }
    case 6: {  // plus
      const int cy = 2 + static_cast<int>(rng.index(side - 4));
      const int cx = 2 + static_cast<int>(rng.index(side - 4));
      for (int i = -2; i <= 2; ++i) {
        put(cy + i, cx, ink);
        put(cy, cx + i, ink);
      }
      break;
    }
    default: {  // checker corner
      const int q = static_cast<int>(rng.index(4));
      const int y0 = (q / 2) * (s / 2);
      const int x0 = (q % 2) * (s / 2);
      for (int y = 0; y < s / 2; ++y) {
        for (int x = 0; x < s / 2; ++x) {
          if (((y / 2) + (x / 2)) % 2 == 0) put(y0 + y, x0 + x, ink);
        }
      }
      break;
    }
  }
}

}  // namespace

Dataset make_patterns(std::size_t n, std::size_t classes, double noise, std::uint64_t seed,
                      std::size_t side) {
  require_nonempty(n, classes);
  if (classes > 8) {
    throw ConfigError("pattern dataset supports at most 8 classes");
  }
  if (side < 6) {
    throw ConfigError("pattern images must be at least 6x6");
  }
  Rng rng(seed);
  std::vector<int> labels = balanced_labels(n, classes, rng);
  Tensor x({n, 1, side, side});
  const std::size_t stride = side * side;
  for (std::size_t i = 0; i < n; ++i) {
    std::span<double> img = x.data().subspan(i * stride, stride);
    draw_pattern(img, side, labels[i], rng);
    for (double& v : img) {
      v += noise * rng.normal();
    }
  }
  return Dataset{std::move(x), std::move(labels), classes};
}

namespace {

std::uint32_t read_be32(std::istream& in, const std::filesystem::path& path) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) {
    throw TruncatedFileError("truncated IDX header in " + path.string());
  }
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
         std::uint32_t{b[3]};
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t limit) {
  std::ifstream img(images, std::ios::binary);
  std::ifstream lab(labels, std::ios::binary);
  if (!img || !lab) {
    throw ConfigError("cannot open IDX files " + images.string() + " / " + labels.string());
  }
  if (read_be32(img, images) != 0x00000803u) {
    throw CorruptModelError(images.string() + " is not an IDX3 unsigned-byte file");
  }
  if (read_be32(lab, labels) != 0x00000801u) {
    throw CorruptModelError(labels.string() + " is not an IDX1 unsigned-byte file");
  }
  std::size_t n = read_be32(img, images);
  const std::size_t h = read_be32(img, images);
  const std::size_t w = read_be32(img, images);
  if (read_be32(lab, labels) != n) {
    throw CorruptModelError("IDX image and label counts differ");
  }
  if (limit > 0) {
    n = std::min(n, limit);
  }
  if (n == 0 || h == 0 || w == 0) {
    throw ConfigError("IDX file holds no images");
  }
  Tensor x({n, 1, h, w});
  std::vector<unsigned char> buf(h * w);
  for (std::size_t i = 0; i < n; ++i) {
    if (!img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
      throw TruncatedFileError("truncated IDX image data in " + images.string());
    }
    for (std::size_t p = 0; p < buf.size(); ++p) {
      x[i * h * w + p] = static_cast<double>(buf[p]) / 255.0;
    }
  }
  std::vector<int> y(n);
  int max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    char c = 0;
    if (!lab.get(c)) {
      throw TruncatedFileError("truncated IDX label data in " + labels.string());
    }
    y[i] = static_cast<unsigned char>(c);
    max_label = std::max(max_label, y[i]);
  }
  return Dataset{std::move(x), std::move(y), static_cast<std::size_t>(max_label) + 1};
}

}  // namespace ttq
