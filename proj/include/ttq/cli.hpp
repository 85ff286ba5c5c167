// Copyright 2026 The TTQ Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ttq/model_format.hpp"
#include "ttq/network.hpp"
#include "ttq/trainer.hpp"

namespace ttq {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;      // runtime or I/O error
inline constexpr int kExitUsage = 2;        // bad flags or config
inline constexpr int kExitDiverged = 3;     // non-finite loss or parameters

// Runs the `ttq` tool; `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Latent model from a checkpoint (JSON) or a model file ("TTQ1"). Packed layers
// of a model file contribute their materialized ternary weights.
Model load_model_any(const std::filesystem::path& path);
Model model_from_inference(const InferenceModel& model);

// Evaluation of an imported model through the packed-plan runtime.
Evaluation evaluate_inference(const InferenceModel& model, const Dataset& data,
                              std::size_t batch_size = 256);

}  // namespace ttq
