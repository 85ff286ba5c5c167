// Copyright 2026 The TTQ Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ttq {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes that do not compose (matmul inner dims, kernel larger than input...).
class DimensionError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

// Raised when a weight tensor has max(|w|) == 0 and cannot be normalized.
class DegenerateWeightsError : public Error {
 public:
  using Error::Error;
};

// Backward requested on a tape that was already consumed, or recording onto it.
class StaleTapeError : public Error {
 public:
  using Error::Error;
};

class CorruptModelError : public Error {
 public:
  using Error::Error;
};

class ChecksumError : public CorruptModelError {
 public:
  using CorruptModelError::CorruptModelError;
};

class VersionError : public CorruptModelError {
 public:
  using CorruptModelError::CorruptModelError;
};

class TruncatedFileError : public CorruptModelError {
 public:
  using CorruptModelError::CorruptModelError;
};

class ArchitectureMismatchError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss or parameter.
class NonFiniteError : public Error {
 public:
  NonFiniteError(const std::string& what, std::size_t step, std::ptrdiff_t layer)
      : Error(what), step_(step), layer_(layer) {}

  std::size_t step() const { return step_; }
  // -1 when no single layer could be blamed.
  std::ptrdiff_t layer() const { return layer_; }

 private:
  std::size_t step_;
  std::ptrdiff_t layer_;
};

}  // namespace ttq
