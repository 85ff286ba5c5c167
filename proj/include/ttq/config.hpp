// Copyright 2026 The TTQ Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ttq/datasets.hpp"
#include "ttq/network.hpp"
#include "ttq/trainer.hpp"

// Experiment configuration files (JSON). The schema is documented in
// docs/config.md; every section rejects unknown keys.
namespace ttq {

struct DatasetConfig {
  std::string kind = "blobs";  // blobs | moons | patterns | idx
  std::size_t train_size = 600;
  std::size_t val_size = 600;
  std::size_t classes = 6;
  double noise = 0.6;
  std::uint64_t seed = 1;  // val split uses seed + 1
  std::size_t dims = 2;
  double radius = 2.0;
  std::size_t side = 8;
  // idx only
  std::string train_images, train_labels, val_images, val_labels;
  std::size_t limit = 0;
};

struct OutputConfig {
  std::string dir = "run";
  std::string model = "model.ttq";
  std::string checkpoint = "checkpoint.json";
  std::string report = "report.jsonl";
};

struct ExperimentConfig {
  ModelSpec model;
  std::uint64_t init_seed = 0;
  DatasetConfig dataset;
  TrainConfig train;
  OutputConfig output;
};

// Applies `path=value` overrides (dotted path, array indices as numbers) to a
// parsed document. Values parse as JSON when possible, else as strings.
void apply_override(nlohmann::json& doc, const std::string& assignment);

// Throws ConfigError naming the offending field (or the parse position).
ExperimentConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {},
                              const std::string& source = "config");
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides = {});

DataSplit load_dataset(const DatasetConfig& cfg);

nlohmann::json policy_to_json(const ThresholdPolicy& p);
ThresholdPolicy policy_from_json(const nlohmann::json& j, const std::string& where);
nlohmann::json model_spec_to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j, const std::string& where = "model");

// Latent state of a trained model: spec, latent weights, biases, codebooks.
nlohmann::json checkpoint_to_json(const Model& model);
Model checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace ttq
