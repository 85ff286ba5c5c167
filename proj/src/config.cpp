// Copyright 2026 The TTQ Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ttq/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "ttq/errors.hpp"

namespace ttq {

using nlohmann::json;

namespace {

// Typed field access over one JSON object; remembers which keys were read so
// leftovers can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) {
      throw ConfigError(path_ + ": expected an object");
    }
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) {
      throw ConfigError(field(key) + ": required field missing");
    }
    return j_.at(key);
  }

  std::size_t size(const std::string& key, std::size_t fallback) {
    return has(key) ? as_size(raw(key), field(key)) : fallback;
  }
  std::uint64_t u64(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) {
      return fallback;
    }
    const json& v = raw(key);
    if (!v.is_number_unsigned()) {
      throw ConfigError(field(key) + ": expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }
  double number(const std::string& key, double fallback) {
    if (!has(key)) {
      return fallback;
    }
    const json& v = raw(key);
    if (!v.is_number()) {
      throw ConfigError(field(key) + ": expected a number");
    }
    return v.get<double>();
  }
  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) {
      return fallback;
    }
    const json& v = raw(key);
    if (!v.is_boolean()) {
      throw ConfigError(field(key) + ": expected true or false");
    }
    return v.get<bool>();
  }
  std::string string(const std::string& key, const std::string& fallback) {
    if (!has(key)) {
      return fallback;
    }
    const json& v = raw(key);
    if (!v.is_string()) {
      throw ConfigError(field(key) + ": expected a string");
    }
    return v.get<std::string>();
  }

  std::string field(const std::string& key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) {
        throw ConfigError(path_ + "." + key + ": unknown field");
      }
    }
  }

  static std::size_t as_size(const json& v, const std::string& where) {
    if (!v.is_number_unsigned()) {
      throw ConfigError(where + ": expected a non-negative integer");
    }
    return v.get<std::size_t>();
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// Wraps library errors raised while interpreting a field.
template <typename F>
auto in_field(const std::string& where, F&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

Shape shape_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) {
    throw ConfigError(where + ": expected a non-empty array of extents");
  }
  Shape s;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::size_t d = Section::as_size(j[i], where + "[" + std::to_string(i) + "]");
    if (d == 0) {
      throw ConfigError(where + "[" + std::to_string(i) + "]: extent must be positive");
    }
    s.push_back(d);
  }
  return s;
}

LayerSpec layer_from_json(const json& j, const std::string& where) {
  Section s(j, where);
  LayerSpec l;
  const std::string type = s.string("type", "");
  if (type == "dense") {
    DenseShape d;
    d.in = s.size("in", 0);
    d.out = s.size("out", 0);
    if (d.in == 0 || d.out == 0) {
      throw ConfigError(where + ": dense layers need positive \"in\" and \"out\"");
    }
    l.kind = d;
  } else if (type == "conv") {
    ConvShape c;
    c.filters = s.size("filters", 0);
    c.channels = s.size("channels", 0);
    const std::size_t kernel = s.size("kernel", 0);
    c.kernel_h = s.size("kernel_h", kernel);
    c.kernel_w = s.size("kernel_w", kernel);
    c.stride = s.size("stride", 1);
    c.padding = s.size("padding", 0);
    if (c.filters == 0 || c.channels == 0 || c.kernel_h == 0 || c.kernel_w == 0 || c.stride == 0) {
      throw ConfigError(where + ": conv layers need positive filters, channels, kernel and stride");
    }
    l.kind = c;
  } else {
    throw ConfigError(where + ".type: expected \"dense\" or \"conv\"");
  }
  if (s.has("quantizer")) {
    const std::string q = s.string("quantizer", "");
    l.quantizer = in_field(s.field("quantizer"), [&] { return parse_quantizer(q); });
  }
  if (s.has("policy")) {
    l.policy = policy_from_json(s.raw("policy"), s.field("policy"));
  }
  l.bias = s.boolean("bias", true);
  s.finish();
  return l;
}

json layer_to_json(const LayerSpec& l) {
  json j;
  if (const auto* d = std::get_if<DenseShape>(&l.kind)) {
    j["type"] = "dense";
    j["in"] = d->in;
    j["out"] = d->out;
  } else {
    const auto& c = std::get<ConvShape>(l.kind);
    j["type"] = "conv";
    j["filters"] = c.filters;
    j["channels"] = c.channels;
    j["kernel_h"] = c.kernel_h;
    j["kernel_w"] = c.kernel_w;
    j["stride"] = c.stride;
    j["padding"] = c.padding;
  }
  if (l.quantizer) {
    j["quantizer"] = std::string(quantizer_name(*l.quantizer));
  }
  if (l.policy) {
    j["policy"] = policy_to_json(*l.policy);
  }
  j["bias"] = l.bias;
  return j;
}

TrainConfig train_from_json(const json& j, const std::string& where) {
  Section s(j, where);
  TrainConfig cfg;
  if (s.has("optimizer")) {
    Section o(s.raw("optimizer"), s.field("optimizer"));
    const std::string type = o.string("type", "adam");
    if (type == "adam") {
      AdamConfig a;
      a.lr = o.number("lr", 0.01);
      a.beta1 = o.number("beta1", a.beta1);
      a.beta2 = o.number("beta2", a.beta2);
      a.eps = o.number("eps", a.eps);
      cfg.optimizer = a;
    } else if (type == "sgd") {
      SgdConfig g;
      g.lr = o.number("lr", g.lr);
      g.momentum = o.number("momentum", g.momentum);
      cfg.optimizer = g;
    } else {
      throw ConfigError(o.field("type") + ": expected \"adam\" or \"sgd\"");
    }
    o.finish();
  } else {
    cfg.optimizer = AdamConfig{0.01};
  }
  if (s.has("lr_schedule")) {
    const json& arr = s.raw("lr_schedule");
    if (!arr.is_array()) {
      throw ConfigError(s.field("lr_schedule") + ": expected an array");
    }
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Section m(arr[i], s.field("lr_schedule") + "[" + std::to_string(i) + "]");
      LrMilestone ms;
      ms.epoch = m.size("epoch", 0);
      ms.multiplier = m.number("multiplier", 1.0);
      m.finish();
      cfg.lr_schedule.push_back(ms);
    }
  }
  cfg.weight_decay = s.number("weight_decay", 0.0);
  cfg.epochs = s.size("epochs", cfg.epochs);
  cfg.batch_size = s.size("batch_size", cfg.batch_size);
  cfg.seed = s.u64("seed", cfg.seed);
  cfg.codebook_lr_multiplier = s.number("codebook_lr_multiplier", 1.0);
  if (s.has("grad_convention")) {
    const std::string c = s.string("grad_convention", "");
    cfg.grad_convention = in_field(s.field("grad_convention"), [&] { return parse_convention(c); });
  }
  cfg.record_steps = s.boolean("record_steps", true);
  s.finish();
  in_field(where, [&] {
    validate(cfg);
    return 0;
  });
  return cfg;
}

DatasetConfig dataset_from_json(const json& j, const std::string& where) {
  Section s(j, where);
  DatasetConfig d;
  d.kind = s.string("kind", d.kind);
  if (d.kind != "blobs" && d.kind != "moons" && d.kind != "patterns" && d.kind != "idx") {
    throw ConfigError(s.field("kind") + ": expected blobs, moons, patterns or idx");
  }
  d.train_size = s.size("train_size", d.train_size);
  d.val_size = s.size("val_size", d.val_size);
  d.classes = s.size("classes", d.kind == "moons" ? 2 : d.classes);
  d.noise = s.number("noise", d.noise);
  d.seed = s.u64("seed", d.seed);
  d.dims = s.size("dims", d.dims);
  d.radius = s.number("radius", d.radius);
  d.side = s.size("side", d.side);
  d.train_images = s.string("train_images", "");
  d.train_labels = s.string("train_labels", "");
  d.val_images = s.string("val_images", "");
  d.val_labels = s.string("val_labels", "");
  d.limit = s.size("limit", 0);
  s.finish();
  if (d.kind == "idx" && (d.train_images.empty() || d.train_labels.empty())) {
    throw ConfigError(where + ": idx datasets need train_images and train_labels");
  }
  if (d.kind != "idx" && d.train_size == 0) {
    throw ConfigError(s.field("train_size") + ": must be positive");
  }
  if (d.noise < 0.0) {
    throw ConfigError(s.field("noise") + ": must be non-negative");
  }
  return d;
}

OutputConfig output_from_json(const json& j, const std::string& where) {
  Section s(j, where);
  OutputConfig o;
  o.dir = s.string("dir", o.dir);
  o.model = s.string("model", o.model);
  o.checkpoint = s.string("checkpoint", o.checkpoint);
  o.report = s.string("report", o.report);
  s.finish();
  return o;
}

json tensor_values(const Tensor& t) { return json(t.values()); }

Tensor tensor_from_json(const json& j, const Shape& shape, const std::string& where) {
  if (!j.is_array() || j.size() != shape_numel(shape)) {
    throw ConfigError(where + ": expected " + std::to_string(shape_numel(shape)) + " numbers");
  }
  std::vector<double> v;
  v.reserve(j.size());
  for (const json& x : j) {
    if (!x.is_number()) {
      throw ConfigError(where + ": expected numbers");
    }
    v.push_back(x.get<double>());
  }
  return Tensor(shape, std::move(v));
}

}  // namespace

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override \"" + assignment + "\": expected path=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) {
    value = text;
  }
  if (value.is_object() || value.is_array()) {
    throw ConfigError("override \"" + path + "\": only scalar values may be set");
  }
  json* node = &doc;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) {
      throw ConfigError("override \"" + path + "\": empty path component");
    }
    parts.push_back(part);
  }
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const std::string& p = parts[i];
    const bool last = i + 1 == parts.size();
    if (node->is_array()) {
      std::size_t idx = 0;
      try {
        std::size_t used = 0;
        idx = std::stoul(p, &used);
        if (used != p.size()) {
          throw std::invalid_argument(p);
        }
      } catch (const std::exception&) {
        throw ConfigError("override \"" + path + "\": \"" + p + "\" is not an array index");
      }
      if (idx >= node->size()) {
        throw ConfigError("override \"" + path + "\": index " + p + " out of range");
      }
      node = &(*node)[idx];
    } else {
      if (node->is_null()) {
        *node = json::object();
      }
      if (!node->is_object()) {
        throw ConfigError("override \"" + path + "\": \"" + p + "\" is below a scalar");
      }
      if (!last && !node->contains(p)) {
        (*node)[p] = json::object();
      }
      node = &(*node)[p];
    }
    if (last) {
      *node = value;
    }
  }
}

json policy_to_json(const ThresholdPolicy& p) {
  json j;
  if (const auto* f = std::get_if<ConstantFactor>(&p)) {
    j["type"] = "factor";
    j["t"] = f->t;
  } else {
    j["type"] = "sparsity";
    j["r"] = std::get<ConstantSparsity>(p).r;
  }
  return j;
}

ThresholdPolicy policy_from_json(const json& j, const std::string& where) {
  Section s(j, where);
  const std::string type = s.string("type", "factor");
  ThresholdPolicy p;
  if (type == "factor") {
    p = ConstantFactor{s.number("t", kDefaultThresholdFactor)};
  } else if (type == "sparsity") {
    p = ConstantSparsity{s.number("r", 0.0)};
  } else {
    throw ConfigError(s.field("type") + ": expected \"factor\" or \"sparsity\"");
  }
  s.finish();
  in_field(where, [&] {
    validate_policy(p);
    return 0;
  });
  return p;
}

json model_spec_to_json(const ModelSpec& spec) {
  json j;
  j["input_shape"] = spec.input_shape;
  j["default_quantizer"] = std::string(quantizer_name(spec.default_quantizer));
  j["default_policy"] = policy_to_json(spec.default_policy);
  json layers = json::array();
  for (const LayerSpec& l : spec.layers) {
    layers.push_back(layer_to_json(l));
  }
  j["layers"] = std::move(layers);
  return j;
}

ModelSpec model_spec_from_json(const json& j, const std::string& where) {
  Section s(j, where);
  ModelSpec spec;
  spec.input_shape = shape_from_json(s.raw("input_shape"), s.field("input_shape"));
  if (s.has("default_quantizer")) {
    const std::string q = s.string("default_quantizer", "");
    spec.default_quantizer = in_field(s.field("default_quantizer"), [&] { return parse_quantizer(q); });
  }
  if (s.has("default_policy")) {
    spec.default_policy = policy_from_json(s.raw("default_policy"), s.field("default_policy"));
  }
  const json& layers = s.raw("layers");
  if (!layers.is_array() || layers.empty()) {
    throw ConfigError(s.field("layers") + ": expected a non-empty array");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    spec.layers.push_back(layer_from_json(layers[i], s.field("layers") + "[" + std::to_string(i) + "]"));
  }
  // init_seed lives next to the architecture; read by parse_config.
  s.has("init_seed");
  s.finish();
  in_field(where, [&] {
    layer_input_shapes(spec);
    return 0;
  });
  return spec;
}

ExperimentConfig parse_config(const std::string& text, const std::vector<std::string>& overrides,
                              const std::string& source) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(source + ": " + e.what());
  }
  for (const std::string& o : overrides) {
    apply_override(doc, o);
  }
  Section top(doc, source);
  ExperimentConfig cfg;
  const json& model = top.raw("model");
  cfg.model = model_spec_from_json(model, "model");
  if (model.contains("init_seed")) {
    if (!model["init_seed"].is_number_unsigned()) {
      throw ConfigError("model.init_seed: expected a non-negative integer");
    }
    cfg.init_seed = model["init_seed"].get<std::uint64_t>();
  }
  if (top.has("dataset")) {
    cfg.dataset = dataset_from_json(top.raw("dataset"), "dataset");
  }
  cfg.train = top.has("train") ? train_from_json(top.raw("train"), "train")
                               : train_from_json(json::object(), "train");
  if (top.has("output")) {
    cfg.output = output_from_json(top.raw("output"), "output");
  }
  top.finish();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides, path.string());
}

DataSplit load_dataset(const DatasetConfig& d) {
  DataSplit split;
  if (d.kind == "blobs") {
    split.train = make_blobs(d.train_size, d.classes, d.noise, d.seed, d.dims, d.radius);
    if (d.val_size > 0) {
      split.val = make_blobs(d.val_size, d.classes, d.noise, d.seed + 1, d.dims, d.radius);
    }
  } else if (d.kind == "moons") {
    split.train = make_moons(d.train_size, d.noise, d.seed);
    if (d.val_size > 0) {
      split.val = make_moons(d.val_size, d.noise, d.seed + 1);
    }
  } else if (d.kind == "patterns") {
    split.train = make_patterns(d.train_size, d.classes, d.noise, d.seed, d.side);
    if (d.val_size > 0) {
      split.val = make_patterns(d.val_size, d.classes, d.noise, d.seed + 1, d.side);
    }
  } else {
    split.train = load_idx(d.train_images, d.train_labels, d.limit);
    if (!d.val_images.empty()) {
      split.val = load_idx(d.val_images, d.val_labels, d.limit);
    }
  }
  return split;
}

json checkpoint_to_json(const Model& model) {
  json j;
  j["format"] = "ttq-checkpoint";
  j["version"] = 1;
  j["model"] = model_spec_to_json(model.spec());
  json layers = json::array();
  for (const QuantizedLayer& l : model.layers()) {
    json lj;
    lj["quantizer"] = std::string(quantizer_name(l.quantizer));
    lj["policy"] = policy_to_json(l.policy);
    lj["weights"] = tensor_values(l.latent_weights);
    if (l.bias) {
      lj["bias"] = tensor_values(*l.bias);
    }
    if (l.codebook) {
      lj["codebook"] = {{"w_pos", l.codebook->w_pos}, {"w_neg", l.codebook->w_neg}};
    }
    layers.push_back(std::move(lj));
  }
  j["layers"] = std::move(layers);
  return j;
}

Model checkpoint_from_json(const json& j) {
  Section top(j, "checkpoint");
  if (top.string("format", "") != "ttq-checkpoint") {
    throw ConfigError("checkpoint: not a ttq checkpoint");
  }
  if (top.u64("version", 0) != 1) {
    throw ConfigError("checkpoint: unsupported version");
  }
  ModelSpec spec = model_spec_from_json(top.raw("model"), "checkpoint.model");
  const json& arr = top.raw("layers");
  if (!arr.is_array() || arr.size() != spec.layers.size()) {
    throw ConfigError("checkpoint.layers: expected one entry per layer");
  }
  std::vector<QuantizedLayer> layers;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string where = "checkpoint.layers[" + std::to_string(i) + "]";
    Section s(arr[i], where);
    QuantizedLayer l;
    l.kind = spec.layers[i].kind;
    const std::string q = s.string("quantizer", "none");
    l.quantizer = in_field(where, [&] { return parse_quantizer(q); });
    l.policy = policy_from_json(s.raw("policy"), s.field("policy"));
    l.latent_weights = tensor_from_json(s.raw("weights"), weight_shape(l.kind), s.field("weights"));
    if (s.has("bias")) {
      l.bias = tensor_from_json(s.raw("bias"), Shape{output_units(l.kind)}, s.field("bias"));
    }
    if (s.has("codebook")) {
      Section c(s.raw("codebook"), s.field("codebook"));
      TernaryCodebook cb{c.number("w_pos", 1.0), c.number("w_neg", 1.0)};
      c.finish();
      l.codebook = cb;
    } else if (l.quantizer == QuantizerKind::TTQ) {
      throw ConfigError(where + ": ttq layers need a codebook");
    }
    s.finish();
    layers.push_back(std::move(l));
  }
  top.finish();
  return in_field("checkpoint", [&] { return Model::from_layers(spec, std::move(layers)); });
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  out << checkpoint_to_json(model).dump(1) << '\n';
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open checkpoint " + path.string());
  }
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace ttq
