// Copyright 2026 The TTQ Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ttq/inspect.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "ttq/errors.hpp"

namespace ttq {

namespace {

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * v);
  return buf;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string lpad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

std::size_t count_nonzero(const InferenceLayer& l) {
  if (const auto* p = std::get_if<PackedTernaryTensor>(&l.weights)) {
    const TernaryPartition part = unpack_partition(*p);
    return part.size() - part.count_zero();
  }
  return std::get<Tensor>(l.weights).size();
}

}  // namespace

std::vector<std::string> layer_names(const std::vector<InferenceLayer>& layers) {
  std::vector<std::string> names;
  std::size_t conv = 0, fc = 0;
  for (const InferenceLayer& l : layers) {
    names.push_back(is_conv(l.kind) ? "conv" + std::to_string(++conv) : "fc" + std::to_string(++fc));
  }
  return names;
}

double SparsityRow::density() const {
  return weights == 0 ? 0.0 : static_cast<double>(nonzeros) / static_cast<double>(weights);
}

std::vector<SparsityRow> sparsity_table(const InferenceModel& model) {
  std::vector<SparsityRow> rows;
  const auto names = layer_names(model.layers);
  SparsityRow conv{"conv total", true, 0, 0, std::nullopt};
  SparsityRow fc{"fc total", true, 0, 0, std::nullopt};
  SparsityRow all{"all total", true, 0, 0, std::nullopt};
  bool any_conv = false, any_fc = false;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const InferenceLayer& l = model.layers[i];
    SparsityRow r;
    r.name = names[i];
    r.weights = shape_numel(weight_shape(l.kind));
    r.nonzeros = count_nonzero(l);
    r.width_bits = l.packed() ? 2u : 32u;
    rows.push_back(r);
    SparsityRow& t = is_conv(l.kind) ? conv : fc;
    (is_conv(l.kind) ? any_conv : any_fc) = true;
    t.weights += r.weights;
    t.nonzeros += r.nonzeros;
    all.weights += r.weights;
    all.nonzeros += r.nonzeros;
  }
  if (any_conv) {
    rows.push_back(conv);
  }
  if (any_fc) {
    rows.push_back(fc);
  }
  if (!model.layers.empty()) {
    rows.push_back(all);
  }
  return rows;
}

std::string render_sparsity_table(const std::vector<SparsityRow>& rows) {
  std::ostringstream os;
  os << pad("Layer", 12) << lpad("Density", 9) << lpad("Width", 8) << lpad("Weights", 10) << '\n';
  for (const SparsityRow& r : rows) {
    if (r.total) {
      os << std::string(39, '-') << '\n';
    }
    os << pad(r.name, 12) << lpad(percent(r.density()), 9)
       << lpad(r.width_bits ? std::to_string(*r.width_bits) + " bit" : "-", 8)
       << lpad(std::to_string(r.weights), 10) << '\n';
  }
  return os.str();
}

nlohmann::ordered_json to_json(const SparsityRow& row) {
  nlohmann::ordered_json j;
  j["type"] = "sparsity";
  j["layer"] = row.name;
  j["total"] = row.total;
  j["weights"] = row.weights;
  j["nonzeros"] = row.nonzeros;
  j["density"] = row.density();
  if (row.width_bits) {
    j["width_bits"] = *row.width_bits;
  } else {
    j["width_bits"] = nullptr;
  }
  return j;
}

std::vector<std::string> KernelGrid::rows() const {
  std::vector<std::string> out;
  for (std::size_t y = 0; y < height; ++y) {
    std::string line;
    for (std::size_t x = 0; x < width; ++x) {
      const std::int8_t s = signs[y * width + x];
      line += s > 0 ? '+' : (s < 0 ? '-' : '.');
    }
    out.push_back(std::move(line));
  }
  return out;
}

std::vector<KernelGrid> kernel_grids(const InferenceModel& model, std::size_t layer,
                                     const std::vector<std::size_t>& filters) {
  if (layer >= model.layers.size()) {
    throw IndexError("layer " + std::to_string(layer) + " out of range (model has " +
                     std::to_string(model.layers.size()) + " layers)");
  }
  const InferenceLayer& l = model.layers[layer];
  const auto* c = std::get_if<ConvShape>(&l.kind);
  if (c == nullptr) {
    throw DimensionError("layer " + std::to_string(layer) + " is not a conv layer");
  }
  const auto* p = std::get_if<PackedTernaryTensor>(&l.weights);
  if (p == nullptr) {
    throw DimensionError("layer " + std::to_string(layer) + " is full precision, not ternary");
  }
  const TernaryPartition part = unpack_partition(*p);
  std::vector<std::size_t> selected = filters;
  if (selected.empty()) {
    for (std::size_t f = 0; f < c->filters; ++f) {
      selected.push_back(f);
    }
  }
  const std::size_t khw = c->kernel_h * c->kernel_w;
  const std::size_t per_filter = c->channels * khw;
  std::vector<KernelGrid> grids;
  for (std::size_t f : selected) {
    if (f >= c->filters) {
      throw IndexError("filter " + std::to_string(f) + " out of range (layer has " +
                       std::to_string(c->filters) + " filters)");
    }
    bool empty = true;
    for (std::size_t i = 0; i < per_filter; ++i) {
      empty = empty && part[f * per_filter + i] == 0;
    }
    for (std::size_t ch = 0; ch < c->channels; ++ch) {
      KernelGrid g;
      g.layer = layer;
      g.filter = f;
      g.channel = ch;
      g.height = c->kernel_h;
      g.width = c->kernel_w;
      g.empty_filter = empty;
      for (std::size_t i = 0; i < khw; ++i) {
        g.signs.push_back(part[f * per_filter + ch * khw + i]);
      }
      grids.push_back(std::move(g));
    }
  }
  return grids;
}

std::string render_kernel_grids(const std::vector<KernelGrid>& grids) {
  std::ostringstream os;
  std::size_t empty = 0;
  std::size_t last_filter = static_cast<std::size_t>(-1);
  for (const KernelGrid& g : grids) {
    if (g.filter != last_filter) {
      os << "layer " << g.layer << " filter " << g.filter;
      if (g.empty_filter) {
        os << "  [empty filter]";
        ++empty;
      }
      os << '\n';
      last_filter = g.filter;
    }
    os << "  channel " << g.channel << '\n';
    for (const std::string& row : g.rows()) {
      os << "    " << row << '\n';
    }
  }
  os << empty << " empty filter(s)\n";
  return os.str();
}

nlohmann::ordered_json to_json(const KernelGrid& grid) {
  nlohmann::ordered_json j;
  j["type"] = "kernel";
  j["layer"] = grid.layer;
  j["filter"] = grid.filter;
  j["channel"] = grid.channel;
  j["rows"] = grid.rows();
  j["empty_filter"] = grid.empty_filter;
  return j;
}

void write_kernel_pgm(const std::filesystem::path& path, const std::vector<KernelGrid>& grids,
                      std::size_t cell) {
  if (grids.empty()) {
    throw Error("no kernels to render");
  }
  std::vector<std::size_t> filters;
  std::size_t channels = 0;
  for (const KernelGrid& g : grids) {
    if (filters.empty() || filters.back() != g.filter) {
      filters.push_back(g.filter);
    }
    channels = std::max(channels, g.channel + 1);
  }
  const std::size_t kh = grids.front().height, kw = grids.front().width;
  // One pixel of separator between tiles.
  const std::size_t tile_h = kh * cell + 1, tile_w = kw * cell + 1;
  const std::size_t height = filters.size() * tile_h + 1, width = channels * tile_w + 1;
  std::vector<std::uint8_t> img(height * width, 64);
  std::size_t row = 0;
  for (std::size_t gi = 0; gi < grids.size(); ++gi) {
    const KernelGrid& g = grids[gi];
    if (gi > 0 && g.filter != grids[gi - 1].filter) {
      ++row;
    }
    for (std::size_t y = 0; y < kh * cell; ++y) {
      for (std::size_t x = 0; x < kw * cell; ++x) {
        const std::int8_t s = g.signs[(y / cell) * kw + x / cell];
        const std::uint8_t v = s > 0 ? 255 : (s < 0 ? 0 : 128);
        img[(row * tile_h + 1 + y) * width + g.channel * tile_w + 1 + x] = v;
      }
    }
  }
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data()), static_cast<std::streamsize>(img.size()));
}

std::vector<CodebookTrace> codebook_traces(const TrainReport& report) {
  std::map<std::size_t, CodebookTrace> by_layer;
  for (const StepRecord& s : report.steps) {
    for (const LayerStepRecord& l : s.layers) {
      CodebookTrace& t = by_layer[l.layer];
      t.layer = l.layer;
      t.steps.push_back(s.step);
      t.w_pos.push_back(l.w_pos);
      t.w_neg.push_back(l.w_neg);
      t.sparsity.push_back(l.sparsity);
    }
  }
  std::vector<CodebookTrace> out;
  for (auto& [layer, t] : by_layer) {
    out.push_back(std::move(t));
  }
  return out;
}

std::string render_codebook_traces(const std::vector<CodebookTrace>& traces, std::size_t samples) {
  std::ostringstream os;
  for (const CodebookTrace& t : traces) {
    if (t.steps.empty()) {
      continue;
    }
    os << "layer " << t.layer << ": " << t.steps.size() << " steps, final w_pos "
       << fixed(t.w_pos.back(), 5) << " w_neg " << fixed(t.w_neg.back(), 5) << " sparsity "
       << percent(t.sparsity.back()) << '\n';
    os << "  " << lpad("step", 8) << lpad("w_pos", 11) << lpad("w_neg", 11) << lpad("sparsity", 10)
       << '\n';
    const std::size_t n = t.steps.size();
    const std::size_t k = std::max<std::size_t>(1, std::min(samples, n));
    std::size_t last = static_cast<std::size_t>(-1);
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t idx = k == 1 ? n - 1 : i * (n - 1) / (k - 1);
      if (idx == last) {
        continue;
      }
      last = idx;
      os << "  " << lpad(std::to_string(t.steps[idx]), 8) << lpad(fixed(t.w_pos[idx], 5), 11)
         << lpad(fixed(t.w_neg[idx], 5), 11) << lpad(percent(t.sparsity[idx]), 10) << '\n';
    }
  }
  if (traces.empty()) {
    os << "no quantized layers recorded\n";
  }
  return os.str();
}

nlohmann::ordered_json to_json(const LayerCompression& row, const std::string& name) {
  nlohmann::ordered_json j;
  j["type"] = "compression";
  j["layer"] = name;
  j["quantized"] = row.quantized;
  j["weights"] = row.weights;
  j["width_bits"] = row.width_bits;
  j["density"] = row.density;
  j["packed_bytes"] = row.packed_bytes;
  j["full_bytes"] = row.full_bytes;
  return j;
}

std::string render_compression(const CompressionReport& report,
                               const std::vector<std::string>& names) {
  std::ostringstream os;
  os << pad("Layer", 10) << lpad("Width", 8) << lpad("Weights", 10) << lpad("Stored B", 11)
     << lpad("32-bit B", 11) << lpad("Ratio", 8) << '\n';
  for (const LayerCompression& l : report.layers) {
    const double ratio = static_cast<double>(l.full_bytes) / static_cast<double>(l.packed_bytes);
    os << pad(names[l.layer], 10) << lpad(std::to_string(l.width_bits) + " bit", 8)
       << lpad(std::to_string(l.weights), 10) << lpad(std::to_string(l.packed_bytes), 11)
       << lpad(std::to_string(l.full_bytes), 11) << lpad(fixed(ratio, 2), 8) << '\n';
  }
  os << "weight payload ratio (all layers): " << fixed(report.ratio(), 3) << "x\n";
  os << "weight payload ratio (quantized layers): " << fixed(report.quantized_ratio(), 3) << "x\n";
  os << "file size: " << report.file_bytes << " bytes\n";
  return os.str();
}

std::string render_op_counts(const std::vector<LayerOpCounts>& rows,
                             const std::vector<std::string>& names) {
  std::ostringstream os;
  os << pad("Layer", 10) << lpad("Outputs", 10) << lpad("Mults", 12) << lpad("Adds", 12)
     << lpad("Skipped", 12) << lpad("Dense MACs", 12) << '\n';
  OpCounts total;
  for (const LayerOpCounts& r : rows) {
    os << pad(names[r.layer] + (r.quantized ? "" : "*"), 10)
       << lpad(std::to_string(r.counts.output_elements), 10)
       << lpad(std::to_string(r.counts.multiplications), 12)
       << lpad(std::to_string(r.counts.additions), 12) << lpad(std::to_string(r.counts.skipped), 12)
       << lpad(std::to_string(r.counts.baseline_macs), 12) << '\n';
    total += r.counts;
  }
  os << pad("total", 10) << lpad(std::to_string(total.output_elements), 10)
     << lpad(std::to_string(total.multiplications), 12) << lpad(std::to_string(total.additions), 12)
     << lpad(std::to_string(total.skipped), 12) << lpad(std::to_string(total.baseline_macs), 12)
     << '\n';
  os << "* full precision layer\n";
  return os.str();
}

}  // namespace ttq
