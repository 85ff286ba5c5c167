// Copyright 2026 The TTQ Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ttq/model_format.hpp"
#include "ttq/runtime.hpp"
#include "ttq/trainer.hpp"

// Reports over model files and training records. Each report is a list of
// structured rows; the text tables are rendered from those rows.
namespace ttq {

// Layers are named conv1, conv2, ..., fc1, fc2, ... by kind and position.
std::vector<std::string> layer_names(const std::vector<InferenceLayer>& layers);

struct SparsityRow {
  std::string name;  // layer name, or "conv total" / "fc total" / "all total"
  bool total = false;
  std::size_t weights = 0;
  std::size_t nonzeros = 0;
  std::optional<unsigned> width_bits;  // empty on total rows

  double density() const;
};

// One row per layer, then conv/fc/all totals (a total is omitted when there are
// no layers of that kind).
std::vector<SparsityRow> sparsity_table(const InferenceModel& model);
std::string render_sparsity_table(const std::vector<SparsityRow>& rows);
nlohmann::ordered_json to_json(const SparsityRow& row);

struct KernelGrid {
  std::size_t layer = 0;
  std::size_t filter = 0;
  std::size_t channel = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::int8_t> signs;  // row-major, height x width
  bool empty_filter = false;       // every weight of the whole filter is zero

  // '+' positive, '-' negative, '.' zero; one text line per kernel row.
  std::vector<std::string> rows() const;
};

// Kernel grids of the packed conv layer `layer`. `filters` empty selects all.
std::vector<KernelGrid> kernel_grids(const InferenceModel& model, std::size_t layer,
                                     const std::vector<std::size_t>& filters = {});
std::string render_kernel_grids(const std::vector<KernelGrid>& grids);
nlohmann::ordered_json to_json(const KernelGrid& grid);
// Portable graymap of one layer's grids tiled filters x channels: white
// positive, black negative, grey zero, each weight `cell` pixels wide.
void write_kernel_pgm(const std::filesystem::path& path, const std::vector<KernelGrid>& grids,
                      std::size_t cell = 8);

struct CodebookTrace {
  std::size_t layer = 0;
  std::vector<std::size_t> steps;
  std::vector<double> w_pos;
  std::vector<double> w_neg;
  std::vector<double> sparsity;
};

std::vector<CodebookTrace> codebook_traces(const TrainReport& report);
// Summary lines plus `samples` evenly spaced rows per layer.
std::string render_codebook_traces(const std::vector<CodebookTrace>& traces,
                                   std::size_t samples = 10);

nlohmann::ordered_json to_json(const LayerCompression& row, const std::string& name);
std::string render_compression(const CompressionReport& report,
                               const std::vector<std::string>& names);

std::string render_op_counts(const std::vector<LayerOpCounts>& rows,
                             const std::vector<std::string>& names);

}  // namespace ttq
