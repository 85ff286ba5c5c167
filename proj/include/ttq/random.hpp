// Copyright 2026 The TTQ Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace ttq {

// Seeded random source. The engine is std::mt19937_64; the distributions are
// derived here rather than via <random> distributions, whose outputs are
// implementation-defined, so that runs are reproducible across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal via Box-Muller.
  double normal();
  // Uniform integer in [0, n); n > 0.
  std::size_t index(std::size_t n);

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Portable Fisher-Yates shuffle (std::shuffle's algorithm is unspecified).
template <typename T>
void shuffle(T& range, Rng& rng) {
  const std::size_t n = range.size();
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.index(i);
    using std::swap;
    swap(range[i - 1], range[j]);
  }
}

}  // namespace ttq
