// Copyright 2026 The TTQ Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ttq/tensor.hpp"

namespace ttq {

struct Dataset {
  Tensor inputs;  // [N x sample_shape...]
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  Shape sample_shape() const;
  // Rows selected by `indices`, in order.
  Dataset gather(std::span<const std::size_t> indices) const;
};

struct DataSplit {
  Dataset train;
  Dataset val;
};

// Isotropic Gaussian blobs with centers evenly spaced on a circle of the given
// radius (first two coordinates; extra dimensions are pure noise).
Dataset make_blobs(std::size_t n, std::size_t classes, double spread, std::uint64_t seed,
                   std::size_t dims = 2, double radius = 2.0);

// Two interleaved half circles, class 0 on top.
Dataset make_moons(std::size_t n, double noise, std::uint64_t seed);

// Single-channel side x side images of noisy strokes. Classes cycle through
// horizontal bar, vertical bar, diagonal, anti-diagonal, cross, box outline,
// plus sign, checker corner; up to 8 classes.
Dataset make_patterns(std::size_t n, std::size_t classes, double noise, std::uint64_t seed,
                      std::size_t side = 8);

// IDX files (the MNIST container): unsigned-byte images [N x H x W] scaled to
// [0, 1] and shaped [N x 1 x H x W], plus a label vector. `limit` = 0 keeps all.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t limit = 0);

}  // namespace ttq
