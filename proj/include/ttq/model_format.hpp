// Copyright 2026 The TTQ Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ttq/network.hpp"
#include "ttq/quantization.hpp"
#include "ttq/tensor.hpp"

// Packed ternary model file ("TTQ1"). The byte layout is documented in
// docs/model_format.md.
namespace ttq {

inline constexpr std::size_t kWeightsPerWord = 16;
inline constexpr std::uint16_t kFormatVersion = 1;

// 2 bits per weight, 16 weights per little-endian 32-bit word, weight i in
// bits 2*(i%16) .. 2*(i%16)+1 of word i/16. 00 zero, 01 +w_pos, 10 -w_neg;
// 11 is invalid.
struct PackedTernaryTensor {
  Shape shape;
  std::vector<std::uint32_t> words;
  TernaryCodebook codebook;

  std::size_t size() const { return shape_numel(shape); }
  friend bool operator==(const PackedTernaryTensor&, const PackedTernaryTensor&) = default;
};

std::size_t packed_word_count(std::size_t weights);
PackedTernaryTensor pack(const TernaryPartition& partition, const TernaryCodebook& codebook);
// Throws CorruptModelError on an 11 field or nonzero padding.
TernaryPartition unpack_partition(const PackedTernaryTensor& packed);
std::pair<TernaryPartition, TernaryCodebook> unpack(const PackedTernaryTensor& packed);

// One layer of an exported model: either packed ternary or full precision.
struct InferenceLayer {
  LayerKind kind;
  QuantizerKind quantizer = QuantizerKind::None;
  std::variant<Tensor, PackedTernaryTensor> weights;
  std::optional<Tensor> bias;

  bool packed() const { return std::holds_alternative<PackedTernaryTensor>(weights); }
  // Dense weights as used by the reference forward path.
  Tensor materialized_weights() const;
};

// Forward-only model reconstructed from a model file.
struct InferenceModel {
  Shape input_shape;
  std::vector<InferenceLayer> layers;

  // Reference path: materialize each layer's weights and run the same kernels as
  // training-time forward; ReLU between layers.
  Tensor forward(const Tensor& input) const;
};

// Rounds the weights of full-precision layers to their 32-bit storage
// precision. Codebook scalars and biases are stored as 64-bit floats.
// `export_model(m)` followed by `import_model` reproduces the forward pass of
// `storage_rounded(m)` bit for bit.
Model storage_rounded(const Model& model);

std::vector<std::uint8_t> export_model(const Model& model);
InferenceModel to_inference(const Model& model);
std::vector<std::uint8_t> serialize(const InferenceModel& model);
// Throws ChecksumError, VersionError, TruncatedFileError or CorruptModelError.
InferenceModel import_model(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// CRC-64/XZ (ECMA-182 polynomial, reflected, init and xorout all ones).
std::uint64_t crc64(std::span<const std::uint8_t> bytes);

struct LayerCompression {
  std::size_t layer = 0;
  bool conv = false;
  bool quantized = false;
  std::size_t weights = 0;
  unsigned width_bits = 32;
  double density = 1.0;
  // Stored bytes for the weights of this layer: packed words plus the two
  // 8-byte codebook scalars for quantized layers, 4 bytes per weight otherwise.
  // Biases excluded.
  std::size_t packed_bytes = 0;
  std::size_t full_bytes = 0;  // 4 bytes per weight
};

struct CompressionReport {
  std::vector<LayerCompression> layers;
  std::size_t packed_bytes = 0;
  std::size_t full_bytes = 0;
  // Same totals over quantized layers only.
  std::size_t quantized_packed_bytes = 0;
  std::size_t quantized_full_bytes = 0;
  std::size_t file_bytes = 0;  // size of the serialized file

  double ratio() const;
  double quantized_ratio() const;
};

CompressionReport compression_report(const InferenceModel& model);

}  // namespace ttq
