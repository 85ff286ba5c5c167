// Copyright 2026 The TTQ Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ttq/cli.hpp"
#include "ttq/config.hpp"
#include "ttq/errors.hpp"
#include "ttq/model_format.hpp"
#include "ttq/ops.hpp"
#include "ttq/runtime.hpp"
#include "ttq/trainer.hpp"

namespace ttq {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string details;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Tensor uniform_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (double& v : t.data()) {
    v = rng.uniform(lo, hi);
  }
  return t;
}

Shape batch_of(std::size_t n, const Shape& sample) {
  Shape s{n};
  s.insert(s.end(), sample.begin(), sample.end());
  return s;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += a[i] * b[i];
  }
  return s;
}

fs::path config_path(const std::string& name) { return fs::path(TTQ_CONFIG_DIR) / name; }

// ---- shared training runs ---------------------------------------------------

struct SuiteRuns {
  std::string name;
  Evaluation fp, ttq, binary;
  TrainResult ttq_run;
};

std::map<std::string, SuiteRuns> g_suites;

TrainResult run_config(const ExperimentConfig& cfg) {
  return train(Model::initialize(cfg.model, cfg.init_seed), load_dataset(cfg.dataset), cfg.train);
}

const SuiteRuns& suite(const std::string& config) {
  auto it = g_suites.find(config);
  if (it != g_suites.end()) {
    return it->second;
  }
  SuiteRuns s;
  s.name = config;
  const fs::path path = config_path(config);
  const ExperimentConfig base = load_config(path);
  const DataSplit data = load_dataset(base.dataset);
  auto val_error = [&](const char* quantizer) {
    const ExperimentConfig cfg = load_config(path, {std::string("model.default_quantizer=") + quantizer});
    TrainResult r = run_config(cfg);
    return std::make_pair(evaluate(r.model, data.val), std::move(r));
  };
  s.fp = val_error("none").first;
  auto t = val_error("ttq");
  s.ttq = t.first;
  s.ttq_run = std::move(t.second);
  s.binary = val_error("stochastic-binary").first;
  return g_suites.emplace(config, std::move(s)).first->second;
}

// ---- 1: gradients -----------------------------------------------------------

Outcome gradient_correctness() {
  Rng rng(101);
  double worst_codebook = 0.0, worst_ternary = 0.0;
  std::size_t latent_mismatch = 0, literal_mismatch = 0;
  for (int trial = 0; trial < 100; ++trial) {
    QuantizedLayer l;
    Tensor x;
    if (trial % 2 == 0) {
      const DenseShape d{2 + rng.index(30), 1 + rng.index(20)};
      l.kind = d;
      x = uniform_tensor({1 + rng.index(8), d.in}, rng);
    } else {
      const ConvShape c{1 + rng.index(5), 1 + rng.index(3), 1 + rng.index(3), 1 + rng.index(3),
                        1 + rng.index(2), rng.index(2)};
      l.kind = c;
      x = uniform_tensor({1 + rng.index(3), c.channels, 5 + rng.index(3), 5 + rng.index(3)}, rng);
    }
    l.quantizer = QuantizerKind::TTQ;
    const double t = rng.uniform(0.02, 0.4);
    l.policy = ConstantFactor{t};
    l.latent_weights = uniform_tensor(weight_shape(l.kind), rng);
    l.bias = uniform_tensor({output_units(l.kind)}, rng, -0.5, 0.5);
    l.codebook = TernaryCodebook{rng.uniform(0.2, 1.5), rng.uniform(0.2, 1.5)};

    const LayerForward f = quantized_forward(l, x);
    const Tensor r = uniform_tensor(f.output.shape(), rng);  // loss = <r, layer(x)>
    const LayerGradients g = quantized_backward(l, f.context, r, GradConvention::ChainRule);
    const LayerGradients lit = quantized_backward(l, f.context, r, GradConvention::UnsignedSum);

    // Codebook scalars against central differences; the partition depends only
    // on the latent weights and is asserted unchanged under the perturbation.
    auto loss_at = [&](double wp, double wn) {
      QuantizedLayer m = l;
      m.codebook = TernaryCodebook{wp, wn};
      const LayerForward p = quantized_forward(m, x);
      if (!(*p.partition == *f.partition)) {
        throw Error("partition moved under a codebook perturbation");
      }
      return dot(p.output, r);
    };
    const double h = 1e-6;
    const double wp = l.codebook->w_pos, wn = l.codebook->w_neg;
    const double fd_p = (loss_at(wp + h, wn) - loss_at(wp - h, wn)) / (2 * h);
    const double fd_n = (loss_at(wp, wn + h) - loss_at(wp, wn - h)) / (2 * h);
    worst_codebook = std::max(worst_codebook, std::abs(*g.w_pos - fd_p) / std::max(std::abs(fd_p), 1e-3));
    worst_codebook = std::max(worst_codebook, std::abs(*g.w_neg - fd_n) / std::max(std::abs(fd_n), 1e-3));
    literal_mismatch += lit.w_pos != g.w_pos || *lit.w_neg != -*g.w_neg;

    // Gradient with respect to the ternary weights: the same layer run in full
    // precision with the ternary weights in place; checked against differences.
    QuantizedLayer plain = l;
    plain.quantizer = QuantizerKind::None;
    plain.codebook.reset();
    plain.latent_weights = ttq_materialize(*f.partition, *l.codebook);
    const Tensor grad_wt = quantized_backward(plain, quantized_forward(plain, x).context, r).latent;
    for (int probe = 0; probe < 4; ++probe) {
      const std::size_t i = rng.index(grad_wt.size());
      QuantizedLayer up = plain, down = plain;
      up.latent_weights[i] += h;
      down.latent_weights[i] -= h;
      const double fd = (dot(quantized_forward(up, x).output, r) - dot(quantized_forward(down, x).output, r)) / (2 * h);
      worst_ternary = std::max(worst_ternary, std::abs(grad_wt[i] - fd) / std::max(std::abs(fd), 1e-3));
    }

    // Latent gradient: w_pos * G above the cut, w_neg * G below, G inside.
    const double max_abs = l.latent_weights.max_abs();
    for (std::size_t i = 0; i < grad_wt.size(); ++i) {
      const double w = l.latent_weights[i] / max_abs;
      const double expected = w > t ? wp * grad_wt[i] : (w < -t ? wn * grad_wt[i] : grad_wt[i]);
      latent_mismatch += g.latent[i] != expected;
      latent_mismatch += lit.latent[i] != expected;
    }
  }
  Outcome o;
  o.pass = worst_codebook < 1e-5 && worst_ternary < 1e-5 && latent_mismatch == 0 && literal_mismatch == 0;
  o.details = "100 cases; codebook max rel err " + fmt("%.2e", worst_codebook) + ", ternary-weight max rel err " +
              fmt("%.2e", worst_ternary) + ", latent mismatches " + std::to_string(latent_mismatch) +
              ", convention mismatches " + std::to_string(literal_mismatch);
  return o;
}

// ---- 2: baselines -------------------------------------------------------------

Outcome baseline_fidelity() {
  Rng rng(202);
  double worst_twn = 0.0, worst_dorefa = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor w = uniform_tensor({1 + rng.index(300)}, rng, -2.0, 2.0);
    long double abs_sum = 0.0L;
    for (double v : w.values()) {
      abs_sum += std::fabs(static_cast<long double>(v));
    }
    const double mean = static_cast<double>(abs_sum / static_cast<long double>(w.size()));
    worst_twn = std::max(worst_twn, std::abs(twn_threshold_and_scale(w).delta - 0.7 * mean));
    const Tensor b = dorefa_binarize(w);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double expected = w[i] >= 0.0 ? mean : -mean;
      worst_dorefa = std::max(worst_dorefa, std::abs(b[i] - expected));
    }
  }
  const std::vector<double> probe{-1.0, -0.9, -0.75, -0.5, -0.3, -0.1, 0.0, 0.05, 0.2, 0.45, 0.7, 0.95, 1.0};
  const Tensor w(Shape{probe.size()}, probe);
  std::vector<double> sums(probe.size(), 0.0);
  const int draws = 100000;
  for (int d = 0; d < draws; ++d) {
    const Tensor s = stochastic_ternarize(w, rng);
    for (std::size_t i = 0; i < probe.size(); ++i) {
      sums[i] += s[i];
    }
  }
  double worst_mean = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    worst_mean = std::max(worst_mean, std::abs(sums[i] / draws - probe[i]));
  }
  Outcome o;
  o.pass = worst_twn <= 1e-12 && worst_dorefa <= 1e-12 && worst_mean < 0.01;
  o.details = "TWN threshold max err " + fmt("%.1e", worst_twn) + ", DoReFa magnitude max err " +
              fmt("%.1e", worst_dorefa) + ", stochastic ternary max mean err " + fmt("%.4f", worst_mean) +
              " over 1e5 draws";
  return o;
}

// ---- 3: sparsity control --------------------------------------------------------

Outcome sparsity_control() {
  const std::vector<std::string> small{"dataset.train_size=300", "dataset.val_size=300", "train.epochs=20"};
  double worst_low = 0.0, worst_high = 0.0;
  std::size_t checked = 0, violations = 0;
  for (int k = 1; k <= 9; ++k) {
    const double r = k / 10.0;
    ExperimentConfig cfg = load_config(config_path("patterns_cnn.json"), small);
    cfg.model.default_policy = ConstantSparsity{r};
    const TrainResult res = run_config(cfg);
    for (const StepRecord& s : res.report.steps) {
      for (const LayerStepRecord& l : s.layers) {
        const double hi = r + 1.0 / static_cast<double>(l.weights);
        ++checked;
        if (l.sparsity < r - 1e-12 || l.sparsity > hi + 1e-12) {
          ++violations;
        }
        worst_low = std::min(worst_low, l.sparsity - r);
        worst_high = std::max(worst_high, l.sparsity - hi);
      }
    }
  }
  ExperimentConfig cfg = load_config(config_path("patterns_cnn.json"), small);
  cfg.model.default_policy = ConstantFactor{0.05};
  const TrainResult res = run_config(cfg);
  std::set<double> distinct;
  std::string factor;
  for (const LayerStepRecord& l : res.report.steps.back().layers) {
    distinct.insert(l.sparsity);
    factor += (factor.empty() ? "" : "/") + fmt("%.3f", l.sparsity);
  }
  Outcome o;
  o.pass = checked > 0 && violations == 0 && distinct.size() >= 2;
  o.details = std::to_string(checked) + " layer-steps over r=0.1..0.9, " + std::to_string(violations) +
              " outside [r, r+1/n]; t=0.05 final sparsities " + factor;
  return o;
}

// ---- 4: accuracy parity ----------------------------------------------------------

Outcome accuracy_parity() {
  Outcome o;
  o.pass = true;
  for (const char* name : {"blobs_mlp.json", "patterns_cnn.json"}) {
    const SuiteRuns& s = suite(name);
    const bool ok = s.ttq.error <= s.fp.error + 0.03 && s.ttq.error < s.binary.error;
    o.pass = o.pass && ok;
    o.details += std::string(o.details.empty() ? "" : "; ") + name + " val err fp " + fmt("%.4f", s.fp.error) +
                 " ttq " + fmt("%.4f", s.ttq.error) + " stochastic-binary " + fmt("%.4f", s.binary.error);
  }
  return o;
}

// ---- 5: sparsity sweep -------------------------------------------------------------

Outcome sweep_shape() {
  const ExperimentConfig cfg = load_config(config_path("patterns_cnn.json"));
  TrainConfig train_cfg = cfg.train;
  train_cfg.record_steps = false;
  const std::vector<double> rs{0.0, 0.2, 0.4, 0.6, 0.8, 0.9};
  const std::vector<SweepRow> rows = sparsity_sweep(Model::initialize(cfg.model, cfg.init_seed),
                                                    load_dataset(cfg.dataset), rs, train_cfg, 1);
  double best_mid = 1.0, at_high = 0.0;
  std::string table;
  for (const SweepRow& r : rows) {
    if (r.r == 0.2 || r.r == 0.4 || r.r == 0.6) {
      best_mid = std::min(best_mid, r.val_error);
    }
    if (r.r == 0.9) {
      at_high = r.val_error;
    }
    table += (table.empty() ? "" : " ") + fmt("%.1f:", r.r) + fmt("%.4f", r.val_error);
  }
  Outcome o;
  o.pass = rows.size() == rs.size() && at_high >= best_mid;
  o.details = "val err by r " + table + "; r=0.9 " + fmt("%.4f", at_high) + " vs best mid " + fmt("%.4f", best_mid);
  return o;
}

// ---- 6: compression ----------------------------------------------------------------

Outcome compression() {
  const Model& m = suite("patterns_cnn.json").ttq_run.model;
  std::size_t quantized = 0, total = 0;
  for (const QuantizedLayer& l : m.layers()) {
    total += l.latent_weights.size();
    quantized += l.quantizer != QuantizerKind::None ? l.latent_weights.size() : 0;
  }
  const std::vector<std::uint8_t> bytes = export_model(m);
  const CompressionReport rep = compression_report(import_model(bytes));
  const double share = static_cast<double>(quantized) / static_cast<double>(total);
  const double ratio = rep.quantized_ratio();

  Rng rng(606);
  std::size_t failures = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Shape shape{1 + rng.index(64), 1 + rng.index(9)};
    std::vector<std::int8_t> signs(shape_numel(shape));
    for (auto& s : signs) {
      s = static_cast<std::int8_t>(static_cast<int>(rng.index(3)) - 1);
    }
    const TernaryPartition p(shape, signs);
    const TernaryCodebook cb{rng.uniform(1e-3, 4.0), rng.uniform(1e-3, 4.0)};
    const auto [p2, cb2] = unpack(pack(p, cb));
    failures += !(p2 == p) || !(cb2 == cb);
  }
  Outcome o;
  o.pass = share >= 0.95 && ratio > 15.0 && ratio <= 16.0 && failures == 0;
  o.details = "quantized share " + fmt("%.3f", share) + ", payload " + std::to_string(rep.quantized_packed_bytes) +
              " B vs " + std::to_string(rep.quantized_full_bytes) + " B, ratio " + fmt("%.3f", ratio) +
              " (whole file " + fmt("%.2f", static_cast<double>(rep.full_bytes) / static_cast<double>(rep.file_bytes)) +
              "x); round-trip failures " + std::to_string(failures) + "/1000";
  return o;
}

// ---- 7: inference equivalence ------------------------------------------------------

ModelSpec random_spec(Rng& rng, bool quantize_all) {
  const std::vector<QuantizerKind> kinds{QuantizerKind::TTQ, QuantizerKind::TWN, QuantizerKind::DoReFaBinary};
  auto pick = [&]() -> std::optional<QuantizerKind> {
    if (quantize_all) {
      return kinds[rng.index(kinds.size())];
    }
    return std::nullopt;
  };
  ModelSpec s;
  if (rng.index(2) == 0) {
    const std::size_t in = 2 + rng.index(20);
    s.input_shape = {in};
    std::size_t prev = in;
    const std::size_t depth = 2 + rng.index(3);
    for (std::size_t i = 0; i < depth; ++i) {
      const std::size_t out = i + 1 == depth ? 2 + rng.index(5) : 4 + rng.index(40);
      s.layers.push_back({DenseShape{prev, out}, pick()});
      prev = out;
    }
  } else {
    const std::size_t c = 1 + rng.index(2), side = 6 + rng.index(4);
    s.input_shape = {c, side, side};
    const std::size_t f1 = 2 + rng.index(5), f2 = 2 + rng.index(6);
    const ConvShape a{f1, c, 3, 3, 1, 1};
    const ConvShape b{f2, f1, 3, 3, 2, 1};
    const std::size_t out_side = (side + 2 - 3) / 2 + 1;
    s.layers = {{a, pick()}, {b, pick()}, {DenseShape{f2 * out_side * out_side, 3 + rng.index(4)}, pick()}};
  }
  if (!quantize_all) {
    s.default_quantizer = kinds[rng.index(kinds.size())];
  }
  s.default_policy = ConstantFactor{rng.uniform(0.02, 0.5)};
  return s;
}

Model randomized(const ModelSpec& spec, Rng& rng) {
  Model m = Model::initialize(spec, rng.next_u64());
  for (QuantizedLayer& l : m.layers()) {
    l.bias = uniform_tensor(l.bias->shape(), rng, -0.5, 0.5);
    if (l.codebook) {
      l.codebook = TernaryCodebook{rng.uniform(0.05, 1.5), rng.uniform(0.05, 1.5)};
    }
  }
  return m;
}

double scaled_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    return INFINITY;
  }
  double e = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    e = std::max(e, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
  }
  return e;
}

Outcome inference_equivalence() {
  Rng rng(707);
  double worst_direct = 0.0, worst_stored = 0.0, worst_density = 0.0;
  std::size_t mult_violations = 0, layers_counted = 0;
  for (int trial = 0; trial < 50; ++trial) {
    for (bool quantize_all : {true, false}) {
      const Model m = randomized(random_spec(rng, quantize_all), rng);
      const std::size_t batch = 1 + rng.index(16);
      const Tensor x = uniform_tensor(batch_of(batch, m.spec().input_shape), rng);
      const CompiledModel cm(import_model(export_model(m)));
      const Tensor y = cm.forward(x);
      if (quantize_all) {
        worst_direct = std::max(worst_direct, scaled_diff(y, m.forward(x)));
      } else {
        worst_stored = std::max(worst_stored, scaled_diff(y, storage_rounded(m).forward(x)));
      }
      const auto parts = m.partitions();
      const std::vector<LayerOpCounts> counts = cm.op_counts(batch);
      for (std::size_t i = 0; i < counts.size(); ++i) {
        if (!counts[i].quantized) {
          continue;
        }
        const OpCounts& c = counts[i].counts;
        ++layers_counted;
        mult_violations += c.multiplications != 2 * c.output_elements;
        const double ratio = static_cast<double>(c.additions) / static_cast<double>(c.baseline_macs);
        worst_density = std::max(worst_density, std::abs(ratio - parts[i]->density()));
      }
    }
  }
  Outcome o;
  o.pass = worst_direct < 1e-9 && worst_stored < 1e-9 && mult_violations == 0 && worst_density <= 1e-12;
  o.details = "50 fully quantized models max rel diff " + fmt("%.1e", worst_direct) +
              ", 50 with full-precision end layers (stored precision) " + fmt("%.1e", worst_stored) + "; " +
              std::to_string(layers_counted) + " quantized layers, multiplication-count violations " +
              std::to_string(mult_violations) + ", additions/baseline vs density max err " +
              fmt("%.1e", worst_density);
  return o;
}

// ---- 8: determinism ----------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "ttq_acceptance_determinism";
  fs::remove_all(root);
  Outcome o;
  o.pass = true;
  for (const char* name : {"blobs_mlp.json", "patterns_cnn.json"}) {
    std::vector<fs::path> dirs;
    for (const char* run : {"a", "b"}) {
      const fs::path dir = root / (std::string(name) + "." + run);
      std::ostringstream out, err;
      const int code = run_cli({"train", "-c", config_path(name).string(), "-o", dir.string()}, out, err);
      if (code != kExitOk) {
        throw Error(std::string("train ") + name + " failed: " + err.str());
      }
      dirs.push_back(dir);
    }
    bool same = true;
    for (const char* f : {"model.ttq", "report.jsonl", "checkpoint.json"}) {
      const std::string a = slurp(dirs[0] / f);
      same = same && !a.empty() && a == slurp(dirs[1] / f);
    }
    o.pass = o.pass && same;
    o.details += std::string(o.details.empty() ? "" : "; ") + name + (same ? " identical" : " DIFFERS");
  }
  o.details += " (model file, report, checkpoint over two CLI runs)";
  fs::remove_all(root);
  return o;
}

// ---- 9: codebook traces --------------------------------------------------------------

Outcome codebook_dynamics() {
  Outcome o;
  bool traces = true;
  double best_gap = 0.0;
  for (const char* name : {"blobs_mlp.json", "patterns_cnn.json"}) {
    const TrainResult& r = suite(name).ttq_run;
    std::vector<std::size_t> quantized;
    for (std::size_t i = 0; i < r.model.layers().size(); ++i) {
      if (r.model.layers()[i].quantizer != QuantizerKind::None) {
        quantized.push_back(i);
      }
    }
    traces = traces && !r.report.steps.empty();
    for (const StepRecord& s : r.report.steps) {
      std::vector<std::size_t> seen;
      for (const LayerStepRecord& l : s.layers) {
        seen.push_back(l.layer);
        traces = traces && std::isfinite(l.w_pos) && std::isfinite(l.w_neg) && std::isfinite(l.sparsity);
      }
      traces = traces && seen == quantized;
    }
    for (const LayerStepRecord& l : r.report.steps.back().layers) {
      best_gap = std::max(best_gap, std::abs(l.w_pos - l.w_neg) / std::max(l.w_pos, l.w_neg));
    }
    o.details += std::string(o.details.empty() ? "" : "; ") + name + " " + std::to_string(r.report.steps.size()) +
                 " steps";
  }
  o.pass = traces && best_gap > 0.01;
  o.details += traces ? ", traces complete" : ", traces INCOMPLETE";
  o.details += ", largest final |w_pos - w_neg| / max " + fmt("%.3f", best_gap);
  return o;
}

struct Criterion {
  int id;
  const char* title;
  double budget_seconds;
  std::function<Outcome()> check;
};

}  // namespace
}  // namespace ttq

int main() {
  using namespace ttq;
  const std::vector<Criterion> criteria{
      {1, "codebook and latent gradients", 60, gradient_correctness},
      {2, "baseline quantizer fidelity", 60, baseline_fidelity},
      {3, "sparsity control", 600, sparsity_control},
      {4, "accuracy parity on the synthetic suite", 600, accuracy_parity},
      {5, "sparsity sweep shape", 900, sweep_shape},
      {6, "compression ratio and pack round trip", 60, compression},
      {7, "packed inference equivalence and op counts", 120, inference_equivalence},
      {8, "training determinism", 600, determinism},
      {9, "codebook traces and asymmetry", 60, codebook_dynamics},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (seconds > c.budget_seconds) {
      o.pass = false;
      o.details += ", over time budget";
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.title << " (" << o.details << ", "
              << fmt("%.1f", seconds) << " s)" << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
