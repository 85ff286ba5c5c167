// Copyright 2026 The TTQ Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ttq/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ttq/config.hpp"
#include "ttq/errors.hpp"
#include "ttq/inspect.hpp"
#include "ttq/runtime.hpp"

namespace ttq {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

bool is_model_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[4] = {};
  in.read(magic, 4);
  return in.gcount() == 4 && std::string(magic, 4) == "TTQ1";
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// Options shared by every config-driven subcommand.
struct ConfigArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string out_dir;

  void add_to(CLI::App* app) {
    app->add_option("-c,--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    app->add_option("--set", overrides, "Override a config field: path=value (repeatable)");
  }

  ExperimentConfig load() const {
    ExperimentConfig cfg = load_config(config, overrides);
    if (!out_dir.empty()) {
      cfg.output.dir = out_dir;
    }
    return cfg;
  }
};

struct Artifacts {
  fs::path model, checkpoint, report;
};

Artifacts write_artifacts(const ExperimentConfig& cfg, const TrainResult& res) {
  const fs::path dir = cfg.output.dir;
  fs::create_directories(dir);
  Artifacts a{dir / cfg.output.model, dir / cfg.output.checkpoint, dir / cfg.output.report};
  write_file_bytes(a.model, export_model(res.model));
  save_checkpoint(res.model, a.checkpoint);
  std::ofstream rep(a.report, std::ios::trunc);
  if (!rep) {
    throw Error("cannot write " + a.report.string());
  }
  res.report.write_jsonl(rep);
  return a;
}

void print_epochs(std::ostream& out, const TrainReport& report) {
  out << "epoch        lr  train_loss  train_err    val_loss    val_err  val_err_avg\n";
  const auto smoothed = report.smoothed_val_errors();
  for (std::size_t i = 0; i < report.epochs.size(); ++i) {
    const EpochRecord& e = report.epochs[i];
    char line[160];
    std::snprintf(line, sizeof line, "%5zu %9.2e %11.5f %10.4f %11.5f %10.4f %12.4f\n", e.epoch,
                  e.lr, e.train_loss, e.train_error, e.val_loss, e.val_error, smoothed[i]);
    out << line;
  }
}

void print_quantizers(std::ostream& out, const Model& m) {
  for (std::size_t i = 0; i < m.layers().size(); ++i) {
    const QuantizedLayer& l = m.layers()[i];
    out << "layer " << i << ": " << quantizer_name(l.quantizer);
    if (l.quantizer == QuantizerKind::TTQ) {
      out << " (" << policy_to_string(l.policy) << ")";
    }
    out << '\n';
  }
}

ojson summary_record(const char* type, const TrainResult& res, const Artifacts& a) {
  ojson j;
  j["type"] = type;
  const EpochRecord last = res.report.epochs.empty() ? EpochRecord{} : res.report.epochs.back();
  j["epochs"] = res.report.epochs.size();
  j["steps"] = res.report.steps.size();
  j["train_error"] = last.train_error;
  j["val_error"] = last.val_error;
  j["model"] = a.model.string();
  j["checkpoint"] = a.checkpoint.string();
  j["report"] = a.report.string();
  ojson q = ojson::array();
  for (const QuantizedLayer& l : res.model.layers()) {
    q.push_back(std::string(quantizer_name(l.quantizer)));
  }
  j["quantizers"] = std::move(q);
  return j;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) {
        throw std::invalid_argument(item);
      }
    } catch (const std::exception&) {
      throw ConfigError("not a number: \"" + item + "\"");
    }
  }
  if (v.empty()) {
    throw ConfigError("empty list");
  }
  return v;
}

std::string bar(double fraction, std::size_t width) {
  const auto n = static_cast<std::size_t>(std::clamp(fraction, 0.0, 1.0) * static_cast<double>(width) + 0.5);
  return std::string(n, '#') + std::string(width - n, ' ');
}

}  // namespace

Model model_from_inference(const InferenceModel& im) {
  ModelSpec spec;
  spec.input_shape = im.input_shape;
  spec.default_quantizer = QuantizerKind::None;
  std::vector<QuantizedLayer> layers;
  for (const InferenceLayer& il : im.layers) {
    LayerSpec ls;
    ls.kind = il.kind;
    ls.quantizer = QuantizerKind::None;
    ls.bias = il.bias.has_value();
    spec.layers.push_back(ls);
    QuantizedLayer l;
    l.kind = il.kind;
    l.quantizer = QuantizerKind::None;
    l.latent_weights = il.materialized_weights();
    l.bias = il.bias;
    layers.push_back(std::move(l));
  }
  return Model::from_layers(std::move(spec), std::move(layers));
}

Model load_model_any(const fs::path& path) {
  if (!fs::exists(path)) {
    throw ConfigError("no such file: " + path.string());
  }
  if (is_model_file(path)) {
    return model_from_inference(import_model(read_file_bytes(path)));
  }
  return load_checkpoint(path);
}

Evaluation evaluate_inference(const InferenceModel& model, const Dataset& data,
                              std::size_t batch_size) {
  if (data.size() > 0 && data.sample_shape() != model.input_shape) {
    throw DimensionError("samples have shape " + shape_to_string(data.sample_shape()) +
                         " but the model expects " + shape_to_string(model.input_shape));
  }
  const CompiledModel compiled(model);
  return evaluate_with([&](const Tensor& x) { return compiled.forward(x); }, data, batch_size);
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Trained ternary quantization toolkit", "ttq"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "ttq 0.1.0");

  // train
  ConfigArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a model from scratch");
  train_args.add_to(train_cmd);
  train_cmd->add_option("-o,--out-dir", train_args.out_dir, "Output directory (overrides output.dir)");

  // finetune
  ConfigArgs ft_args;
  std::string ft_from;
  CLI::App* ft_cmd = app.add_subcommand("finetune", "Fine-tune quantized layers from a trained model");
  ft_args.add_to(ft_cmd);
  ft_cmd->add_option("--from", ft_from, "Source checkpoint (JSON) or full-precision model file")
      ->required()
      ->check(CLI::ExistingFile);
  ft_cmd->add_option("-o,--out-dir", ft_args.out_dir, "Output directory (overrides output.dir)");

  // eval
  ConfigArgs eval_args;
  std::string eval_model, eval_split = "val", eval_engine = "plan";
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a model file or checkpoint");
  eval_args.add_to(eval_cmd);
  eval_cmd->add_option("-m,--model", eval_model, "Model file or checkpoint")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--split", eval_split, "Dataset split")->check(CLI::IsMember({"train", "val"}));
  eval_cmd->add_option("--engine", eval_engine, "Model-file execution path")
      ->check(CLI::IsMember({"plan", "reference"}));

  // quantize
  std::string q_from, q_kind = "twn", q_out, q_checkpoint;
  bool q_include_exempt = false;
  CLI::App* q_cmd = app.add_subcommand("quantize", "Apply a post-hoc quantizer to a full-precision model");
  q_cmd->add_option("--from", q_from, "Source checkpoint or model file")->required()->check(CLI::ExistingFile);
  q_cmd->add_option("-q,--quantizer", q_kind, "Quantizer")->check(CLI::IsMember({"twn", "dorefa"}));
  q_cmd->add_flag("--include-exempt", q_include_exempt, "Also quantize the first and last layers");
  q_cmd->add_option("-o,--out", q_out, "Output model file")->required();
  q_cmd->add_option("--checkpoint-out", q_checkpoint, "Also write the quantized checkpoint");

  // export
  std::string ex_checkpoint, ex_out;
  CLI::App* ex_cmd = app.add_subcommand("export", "Write the packed model file of a checkpoint");
  ex_cmd->add_option("--checkpoint", ex_checkpoint, "Checkpoint (JSON)")->required()->check(CLI::ExistingFile);
  ex_cmd->add_option("-o,--out", ex_out, "Output model file")->required();

  // sweep
  ConfigArgs sw_args;
  std::string sw_r = "0,0.2,0.4,0.6,0.8,0.9", sw_records;
  std::size_t sw_threads = 1;
  bool sw_chart = false;
  CLI::App* sw_cmd = app.add_subcommand("sweep", "Train one model per target sparsity");
  sw_args.add_to(sw_cmd);
  sw_cmd->add_option("-o,--out-dir", sw_args.out_dir, "Output directory (overrides output.dir)");
  sw_cmd->add_option("--r", sw_r, "Comma-separated target sparsities in [0, 1)");
  sw_cmd->add_option("--threads", sw_threads, "Concurrent runs")->check(CLI::PositiveNumber);
  sw_cmd->add_flag("--chart", sw_chart, "Print a text chart of validation error");
  sw_cmd->add_option("--records", sw_records, "Records file (default <output.dir>/sweep.jsonl)");

  // inspect
  CLI::App* in_cmd = app.add_subcommand("inspect", "Reports over model files and training records");
  in_cmd->require_subcommand(1);
  bool in_json = false;
  std::string sp_model;
  CLI::App* sp_cmd = in_cmd->add_subcommand("sparsity", "Layer-wise density and width");
  sp_cmd->add_option("model", sp_model, "Model file")->required()->check(CLI::ExistingFile);
  sp_cmd->add_flag("--json", in_json, "Print records instead of a table");

  std::string kn_model, kn_pgm;
  std::vector<std::size_t> kn_layers, kn_filters;
  CLI::App* kn_cmd = in_cmd->add_subcommand("kernels", "Ternary kernel grids of conv layers");
  kn_cmd->add_option("model", kn_model, "Model file")->required()->check(CLI::ExistingFile);
  kn_cmd->add_option("--layer", kn_layers, "Layer index (default: every packed conv layer)");
  kn_cmd->add_option("--filter", kn_filters, "Filter index (default: all)");
  kn_cmd->add_option("--pgm", kn_pgm, "Also write one graymap per layer into this directory");
  kn_cmd->add_flag("--json", in_json, "Print records instead of grids");

  std::string cb_report;
  std::size_t cb_samples = 10;
  CLI::App* cb_cmd = in_cmd->add_subcommand("codebooks", "Codebook and sparsity traces from a training report");
  cb_cmd->add_option("report", cb_report, "Training report (JSONL)");
  cb_cmd->add_option("--samples", cb_samples, "Rows per layer")->check(CLI::PositiveNumber);
  cb_cmd->add_flag("--json", in_json, "Print records instead of a table");

  std::string cp_model;
  CLI::App* cp_cmd = in_cmd->add_subcommand("compression", "Weight payload against 32-bit storage");
  cp_cmd->add_option("model", cp_model, "Model file")->required()->check(CLI::ExistingFile);
  cp_cmd->add_flag("--json", in_json, "Print records instead of a table");

  std::string ops_model;
  std::size_t ops_batch = 1, ops_bench = 0;
  CLI::App* ops_cmd = in_cmd->add_subcommand("ops", "Operation counts of the packed runtime");
  ops_cmd->add_option("model", ops_model, "Model file")->required()->check(CLI::ExistingFile);
  ops_cmd->add_option("--batch", ops_batch, "Batch size");
  ops_cmd->add_option("--bench", ops_bench, "Also time this many forward passes (no thresholds)");
  ops_cmd->add_flag("--json", in_json, "Print records instead of a table");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (train_cmd->parsed()) {
      const ExperimentConfig cfg = train_args.load();
      const DataSplit data = load_dataset(cfg.dataset);
      const TrainResult res = train(Model::initialize(cfg.model, cfg.init_seed), data, cfg.train);
      const Artifacts a = write_artifacts(cfg, res);
      print_quantizers(out, res.model);
      print_epochs(out, res.report);
      out << summary_record("train", res, a).dump() << '\n';
    } else if (ft_cmd->parsed()) {
      const ExperimentConfig cfg = ft_args.load();
      const Model source = load_model_any(ft_from);
      const DataSplit data = load_dataset(cfg.dataset);
      const TrainResult res = finetune_from(source, cfg.model, data, cfg.train);
      const Artifacts a = write_artifacts(cfg, res);
      print_quantizers(out, res.model);
      print_epochs(out, res.report);
      out << summary_record("finetune", res, a).dump() << '\n';
    } else if (eval_cmd->parsed()) {
      const ExperimentConfig cfg = eval_args.load();
      const DataSplit data = load_dataset(cfg.dataset);
      const Dataset& split = eval_split == "train" ? data.train : data.val;
      if (split.size() == 0) {
        throw ConfigError("dataset has no " + eval_split + " split");
      }
      Evaluation ev;
      if (is_model_file(eval_model)) {
        const InferenceModel im = import_model(read_file_bytes(eval_model));
        ev = eval_engine == "plan"
                 ? evaluate_inference(im, split)
                 : evaluate_with([&](const Tensor& x) { return im.forward(x); }, split);
      } else {
        ev = evaluate(load_checkpoint(eval_model), split);
      }
      out << "loss " << fmt(ev.loss, 6) << "  error " << fmt(ev.error, 4) << '\n';
      ojson j;
      j["type"] = "eval";
      j["model"] = eval_model;
      j["split"] = eval_split;
      j["samples"] = split.size();
      j["loss"] = ev.loss;
      j["error"] = ev.error;
      out << j.dump() << '\n';
    } else if (q_cmd->parsed()) {
      const Model source = load_model_any(q_from);
      ModelSpec target = source.spec();
      target.default_quantizer = parse_quantizer(q_kind);
      for (LayerSpec& l : target.layers) {
        l.quantizer = q_include_exempt ? std::optional<QuantizerKind>(target.default_quantizer)
                                       : std::nullopt;
        l.policy.reset();
      }
      const Model q = adopt_weights(source, target);
      const InferenceModel im = to_inference(q);
      write_file_bytes(q_out, serialize(im));
      if (!q_checkpoint.empty()) {
        save_checkpoint(q, q_checkpoint);
      }
      print_quantizers(out, q);
      out << render_compression(compression_report(im), layer_names(im.layers));
    } else if (ex_cmd->parsed()) {
      const Model m = load_checkpoint(ex_checkpoint);
      const auto bytes = export_model(m);
      write_file_bytes(ex_out, bytes);
      out << "wrote " << ex_out << " (" << bytes.size() << " bytes)\n";
    } else if (sw_cmd->parsed()) {
      const ExperimentConfig cfg = sw_args.load();
      const std::vector<double> rs = parse_list(sw_r);
      const DataSplit data = load_dataset(cfg.dataset);
      TrainConfig tc = cfg.train;
      tc.record_steps = false;
      const auto rows =
          sparsity_sweep(Model::initialize(cfg.model, cfg.init_seed), data, rs, tc, sw_threads);
      const fs::path records = sw_records.empty() ? fs::path(cfg.output.dir) / "sweep.jsonl"
                                                  : fs::path(sw_records);
      if (records.has_parent_path()) {
        fs::create_directories(records.parent_path());
      }
      std::ofstream rec(records, std::ios::trunc);
      if (!rec) {
        throw Error("cannot write " + records.string());
      }
      out << "     r  sparsity  train_err  val_err\n";
      double worst = 0.0;
      for (const SweepRow& r : rows) {
        ojson j;
        j["type"] = "sweep";
        j["r"] = r.r;
        j["achieved_sparsity"] = r.achieved_sparsity;
        j["train_error"] = r.train_error;
        j["val_error"] = r.val_error;
        rec << j.dump() << '\n';
        char line[96];
        std::snprintf(line, sizeof line, "%6.2f %9.3f %10.4f %8.4f\n", r.r, r.achieved_sparsity,
                      r.train_error, r.val_error);
        out << line;
        worst = std::max(worst, r.val_error);
      }
      if (sw_chart) {
        out << "\nvalidation error\n";
        for (const SweepRow& r : rows) {
          out << fmt(r.r, 2) << " |" << bar(worst > 0 ? r.val_error / worst : 0.0, 40) << "| "
              << fmt(r.val_error, 4) << '\n';
        }
      }
    } else if (sp_cmd->parsed()) {
      const InferenceModel im = import_model(read_file_bytes(sp_model));
      const auto rows = sparsity_table(im);
      if (in_json) {
        for (const auto& r : rows) {
          out << to_json(r).dump() << '\n';
        }
      } else {
        out << render_sparsity_table(rows);
      }
    } else if (kn_cmd->parsed()) {
      const InferenceModel im = import_model(read_file_bytes(kn_model));
      std::vector<std::size_t> layers = kn_layers;
      if (layers.empty()) {
        for (std::size_t i = 0; i < im.layers.size(); ++i) {
          if (is_conv(im.layers[i].kind) && im.layers[i].packed()) {
            layers.push_back(i);
          }
        }
        if (layers.empty()) {
          throw ConfigError("model has no ternary conv layers");
        }
      }
      for (std::size_t layer : layers) {
        const auto grids = kernel_grids(im, layer, kn_filters);
        if (in_json) {
          for (const auto& g : grids) {
            out << to_json(g).dump() << '\n';
          }
        } else {
          out << render_kernel_grids(grids);
        }
        if (!kn_pgm.empty()) {
          const fs::path p = fs::path(kn_pgm) / ("layer" + std::to_string(layer) + ".pgm");
          write_kernel_pgm(p, grids);
          if (!in_json) {
            out << "wrote " << p.string() << '\n';
          }
        }
      }
    } else if (cb_cmd->parsed()) {
      if (cb_report.empty()) {
        throw ConfigError("codebook traces need a training report: ttq inspect codebooks <report.jsonl>");
      }
      std::ifstream in(cb_report);
      if (!in) {
        throw ConfigError("cannot open training report " + cb_report +
                          " (codebook traces are read from the report written by train)");
      }
      const auto traces = codebook_traces(TrainReport::read_jsonl(in));
      if (in_json) {
        for (const auto& t : traces) {
          ojson j;
          j["type"] = "codebook_trace";
          j["layer"] = t.layer;
          j["steps"] = t.steps;
          j["w_pos"] = t.w_pos;
          j["w_neg"] = t.w_neg;
          j["sparsity"] = t.sparsity;
          out << j.dump() << '\n';
        }
      } else {
        out << render_codebook_traces(traces, cb_samples);
      }
    } else if (cp_cmd->parsed()) {
      const InferenceModel im = import_model(read_file_bytes(cp_model));
      const CompressionReport rep = compression_report(im);
      const auto names = layer_names(im.layers);
      if (in_json) {
        for (const auto& l : rep.layers) {
          out << to_json(l, names[l.layer]).dump() << '\n';
        }
        ojson j;
        j["type"] = "compression_total";
        j["packed_bytes"] = rep.packed_bytes;
        j["full_bytes"] = rep.full_bytes;
        j["ratio"] = rep.ratio();
        j["quantized_ratio"] = rep.quantized_ratio();
        j["file_bytes"] = rep.file_bytes;
        out << j.dump() << '\n';
      } else {
        out << render_compression(rep, names);
      }
    } else if (ops_cmd->parsed()) {
      const InferenceModel im = import_model(read_file_bytes(ops_model));
      const CompiledModel compiled(im);
      const auto rows = compiled.op_counts(ops_batch);
      const auto names = layer_names(im.layers);
      if (in_json) {
        for (const auto& r : rows) {
          ojson j;
          j["type"] = "ops";
          j["layer"] = names[r.layer];
          j["quantized"] = r.quantized;
          j["output_elements"] = r.counts.output_elements;
          j["multiplications"] = r.counts.multiplications;
          j["additions"] = r.counts.additions;
          j["skipped"] = r.counts.skipped;
          j["baseline_macs"] = r.counts.baseline_macs;
          out << j.dump() << '\n';
        }
      } else {
        out << render_op_counts(rows, names);
      }
      if (ops_bench > 0 && ops_batch > 0) {
        Shape shape{ops_batch};
        shape.insert(shape.end(), im.input_shape.begin(), im.input_shape.end());
        Tensor x(shape);
        Rng rng(0);
        for (double& v : x.data()) {
          v = rng.normal();
        }
        const BenchmarkResult b = benchmark_forward(compiled, x, ops_bench);
        out << "plan forward " << fmt(b.plan_seconds * 1e3, 3) << " ms, reference forward "
            << fmt(b.reference_seconds * 1e3, 3) << " ms (best of " << ops_bench << ")\n";
      }
    }
  } catch (const NonFiniteError& e) {
    err << "error: training diverged: " << e.what() << " (step " << e.step() << ", layer "
        << (e.layer() < 0 ? std::string("unknown") : std::to_string(e.layer())) << ")\n";
    return kExitDiverged;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ArchitectureMismatchError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace ttq
