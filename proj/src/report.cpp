// Copyright 2026 The TTQ Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

// Line-delimited JSON serialization of TrainReport.

#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "ttq/errors.hpp"
#include "ttq/trainer.hpp"

namespace ttq {

using ojson = nlohmann::ordered_json;

void TrainReport::write_jsonl(std::ostream& out) const {
  const std::vector<double> smoothed = smoothed_val_errors();
  std::size_t next_epoch = 0;
  auto emit_epoch = [&](const EpochRecord& e, std::size_t index) {
    ojson j;
    j["type"] = "epoch";
    j["epoch"] = e.epoch;
    j["lr"] = e.lr;
    j["train_loss"] = e.train_loss;
    j["train_error"] = e.train_error;
    j["val_loss"] = e.val_loss;
    j["val_error"] = e.val_error;
    j["val_error_smoothed"] = smoothed[index];
    out << j.dump() << '\n';
  };
  for (const StepRecord& s : steps) {
    // Epoch summaries follow the last step of their epoch.
    while (next_epoch < epochs.size() && epochs[next_epoch].epoch < s.epoch) {
      emit_epoch(epochs[next_epoch], next_epoch);
      ++next_epoch;
    }
    ojson j;
    j["type"] = "step";
    j["step"] = s.step;
    j["epoch"] = s.epoch;
    j["loss"] = s.loss;
    j["lr"] = s.lr;
    ojson layers = ojson::array();
    for (const LayerStepRecord& l : s.layers) {
      ojson lj;
      lj["layer"] = l.layer;
      lj["quantizer"] = std::string(quantizer_name(l.quantizer));
      lj["weights"] = l.weights;
      lj["sparsity"] = l.sparsity;
      lj["w_pos"] = l.w_pos;
      lj["w_neg"] = l.w_neg;
      lj["delta"] = l.delta;
      lj["churn"] = l.churn;
      layers.push_back(std::move(lj));
    }
    j["layers"] = std::move(layers);
    out << j.dump() << '\n';
  }
  for (; next_epoch < epochs.size(); ++next_epoch) {
    emit_epoch(epochs[next_epoch], next_epoch);
  }
}

std::string TrainReport::to_jsonl() const {
  std::ostringstream os;
  write_jsonl(os);
  return os.str();
}

TrainReport TrainReport::read_jsonl(std::istream& in) {
  TrainReport report;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    try {
      const ojson j = ojson::parse(line);
      const std::string type = j.at("type").get<std::string>();
      if (type == "step") {
        StepRecord s;
        s.step = j.at("step").get<std::size_t>();
        s.epoch = j.at("epoch").get<std::size_t>();
        s.loss = j.at("loss").get<double>();
        s.lr = j.at("lr").get<double>();
        for (const auto& lj : j.at("layers")) {
          LayerStepRecord l;
          l.layer = lj.at("layer").get<std::size_t>();
          l.quantizer = parse_quantizer(lj.at("quantizer").get<std::string>());
          l.weights = lj.at("weights").get<std::size_t>();
          l.sparsity = lj.at("sparsity").get<double>();
          l.w_pos = lj.at("w_pos").get<double>();
          l.w_neg = lj.at("w_neg").get<double>();
          l.delta = lj.at("delta").get<double>();
          l.churn = lj.at("churn").get<double>();
          s.layers.push_back(l);
        }
        report.steps.push_back(std::move(s));
      } else if (type == "epoch") {
        EpochRecord e;
        e.epoch = j.at("epoch").get<std::size_t>();
        e.lr = j.at("lr").get<double>();
        e.train_loss = j.at("train_loss").get<double>();
        e.train_error = j.at("train_error").get<double>();
        e.val_loss = j.at("val_loss").get<double>();
        e.val_error = j.at("val_error").get<double>();
        report.epochs.push_back(e);
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("report line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return report;
}

}  // namespace ttq
