// Copyright 2026 The TTQ Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ttq/model_format.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include <boost/crc.hpp>

#include "ttq/errors.hpp"
#include "ttq/ops.hpp"

namespace ttq {

namespace {

constexpr std::uint32_t kFieldZero = 0b00;
constexpr std::uint32_t kFieldPos = 0b01;
constexpr std::uint32_t kFieldNeg = 0b10;
constexpr std::uint32_t kFieldInvalid = 0b11;

constexpr std::uint8_t kKindDense = 0;
constexpr std::uint8_t kKindConv = 1;
constexpr std::uint8_t kStorageFull = 0;
constexpr std::uint8_t kStoragePacked = 1;

class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const char* s, std::size_t n) { out_.insert(out_.end(), s, s + n); }
  void size32(std::size_t v) {
    if (v > std::numeric_limits<std::uint32_t>::max()) {
      throw Error("model field exceeds 32 bits");
    }
    u32(static_cast<std::uint32_t>(v));
  }

  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) {
      out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
  }

  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }

  // Fails before allocating when `count` items of `width` bytes cannot fit.
  void require(std::size_t count, std::size_t width, const char* what) const {
    if (width != 0 && count > remaining() / width) {
      throw TruncatedFileError(std::string("truncated model file while reading ") + what +
                               " at offset " + std::to_string(pos_));
    }
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::uint64_t le(std::size_t n) {
    require(1, n, "field");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    }
    pos_ += n;
    return v;
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

std::uint32_t encode_sign(std::int8_t s) {
  return s > 0 ? kFieldPos : (s < 0 ? kFieldNeg : kFieldZero);
}

Tensor round_to_f32(const Tensor& t) {
  Tensor out = t;
  for (double& v : out.data()) {
    v = static_cast<double>(static_cast<float>(v));
  }
  return out;
}

Tensor dense_or_conv_forward(const InferenceLayer& layer, const Tensor& x, const Tensor& w) {
  Tensor out;
  if (const auto* d = std::get_if<DenseShape>(&layer.kind)) {
    const Tensor flat = x.rank() == 2 ? x : ops::flatten_batch(x);
    if (flat.dim(1) != d->in) {
      throw DimensionError("dense layer expects " + std::to_string(d->in) + " inputs, got " +
                           shape_to_string(x.shape()));
    }
    out = ops::matmul_transposed_b(flat, w);
  } else {
    const auto& c = std::get<ConvShape>(layer.kind);
    out = ops::conv2d(x, w, ops::Conv2dGeometry{c.stride, c.padding});
  }
  if (layer.bias) {
    out = ops::add_bias(out, *layer.bias);
  }
  return out;
}

}  // namespace

std::size_t packed_word_count(std::size_t weights) {
  return (weights + kWeightsPerWord - 1) / kWeightsPerWord;
}

PackedTernaryTensor pack(const TernaryPartition& partition, const TernaryCodebook& codebook) {
  PackedTernaryTensor p;
  p.shape = partition.shape();
  p.codebook = codebook;
  p.words.assign(packed_word_count(partition.size()), 0u);
  for (std::size_t i = 0; i < partition.size(); ++i) {
    p.words[i / kWeightsPerWord] |= encode_sign(partition[i]) << (2 * (i % kWeightsPerWord));
  }
  return p;
}

TernaryPartition unpack_partition(const PackedTernaryTensor& packed) {
  const std::size_t n = packed.size();
  if (packed.words.size() != packed_word_count(n)) {
    throw CorruptModelError("packed tensor of " + std::to_string(n) + " weights needs " +
                            std::to_string(packed_word_count(n)) + " words, has " +
                            std::to_string(packed.words.size()));
  }
  std::vector<std::int8_t> signs(n);
  for (std::size_t w = 0; w < packed.words.size(); ++w) {
    const std::uint32_t word = packed.words[w];
    for (std::size_t f = 0; f < kWeightsPerWord; ++f) {
      const std::uint32_t field = (word >> (2 * f)) & 0b11u;
      const std::size_t i = w * kWeightsPerWord + f;
      if (field == kFieldInvalid) {
        throw CorruptModelError("invalid ternary field 11 in word " + std::to_string(w) +
                                " (field " + std::to_string(f) + ")");
      }
      if (i >= n) {
        if (field != kFieldZero) {
          throw CorruptModelError("nonzero padding field in word " + std::to_string(w));
        }
        continue;
      }
      signs[i] = field == kFieldPos ? 1 : (field == kFieldNeg ? -1 : 0);
    }
  }
  return TernaryPartition(packed.shape, std::move(signs));
}

std::pair<TernaryPartition, TernaryCodebook> unpack(const PackedTernaryTensor& packed) {
  return {unpack_partition(packed), packed.codebook};
}

Tensor InferenceLayer::materialized_weights() const {
  if (const auto* p = std::get_if<PackedTernaryTensor>(&weights)) {
    return ttq_materialize(unpack_partition(*p), p->codebook);
  }
  return std::get<Tensor>(weights);
}

Tensor InferenceModel::forward(const Tensor& input) const {
  Tensor x = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = dense_or_conv_forward(layers[i], x, layers[i].materialized_weights());
    if (i + 1 < layers.size()) {
      x = ops::relu(x);
    }
  }
  return x;
}

Model storage_rounded(const Model& model) {
  Model m = model;
  for (auto& l : m.layers()) {
    if (l.quantizer == QuantizerKind::None) {
      l.latent_weights = round_to_f32(l.latent_weights);
    }
  }
  return m;
}

InferenceModel to_inference(const Model& model) {
  InferenceModel im;
  im.input_shape = model.spec().input_shape;
  for (const QuantizedLayer& l : model.layers()) {
    InferenceLayer il;
    il.kind = l.kind;
    il.quantizer = l.quantizer;
    il.bias = l.bias;
    if (l.quantizer == QuantizerKind::None) {
      il.weights = round_to_f32(l.latent_weights);
    } else {
      // Eval mode: stochastic quantizers export their most likely draw.
      MaterializedWeights m = materialize_weights(l, QuantizeContext{});
      il.weights = pack(*m.partition, *m.codebook);
    }
    im.layers.push_back(std::move(il));
  }
  return im;
}

std::vector<std::uint8_t> serialize(const InferenceModel& model) {
  ByteWriter w;
  w.bytes("TTQ1", 4);
  w.u16(kFormatVersion);
  w.u16(0);
  w.size32(model.layers.size());
  w.size32(model.input_shape.size());
  for (std::size_t d : model.input_shape) {
    w.size32(d);
  }
  for (const InferenceLayer& l : model.layers) {
    w.u8(is_conv(l.kind) ? kKindConv : kKindDense);
    w.u8(l.packed() ? kStoragePacked : kStorageFull);
    w.u8(static_cast<std::uint8_t>(l.quantizer));
    w.u8(l.bias ? 1 : 0);
    if (const auto* d = std::get_if<DenseShape>(&l.kind)) {
      w.size32(d->in);
      w.size32(d->out);
    } else {
      const auto& c = std::get<ConvShape>(l.kind);
      w.size32(c.filters);
      w.size32(c.channels);
      w.size32(c.kernel_h);
      w.size32(c.kernel_w);
      w.size32(c.stride);
      w.size32(c.padding);
    }
    if (const auto* p = std::get_if<PackedTernaryTensor>(&l.weights)) {
      require_same_shape(p->shape, weight_shape(l.kind), "serialize");
      w.f64(p->codebook.w_pos);
      w.f64(p->codebook.w_neg);
      w.size32(p->words.size());
      for (std::uint32_t word : p->words) {
        w.u32(word);
      }
    } else {
      const Tensor& t = std::get<Tensor>(l.weights);
      require_same_shape(t.shape(), weight_shape(l.kind), "serialize");
      for (double v : t.data()) {
        w.f32(static_cast<float>(v));
      }
    }
    if (l.bias) {
      require_same_shape(l.bias->shape(), Shape{output_units(l.kind)}, "serialize");
      for (double v : l.bias->data()) {
        w.f64(v);
      }
    }
  }
  w.u64(crc64(w.buffer()));
  return std::move(w.buffer());
}

std::vector<std::uint8_t> export_model(const Model& model) { return serialize(to_inference(model)); }

InferenceModel import_model(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 4) {
    throw TruncatedFileError("model file shorter than its magic");
  }
  if (std::memcmp(bytes.data(), "TTQ1", 4) != 0) {
    throw CorruptModelError("bad magic: not a TTQ1 model file");
  }
  for (int i = 0; i < 4; ++i) {
    r.u8();
  }
  const std::uint16_t version = r.u16();
  if (version != kFormatVersion) {
    throw VersionError("unsupported model format version " + std::to_string(version) +
                       " (expected " + std::to_string(kFormatVersion) + ")");
  }
  const std::uint16_t flags = r.u16();
  const std::uint32_t layer_count = r.u32();
  const std::uint32_t rank = r.u32();
  r.require(rank, 4, "input shape");

  InferenceModel model;
  for (std::uint32_t i = 0; i < rank; ++i) {
    model.input_shape.push_back(r.u32());
  }
  r.require(layer_count, 12, "layer records");
  std::vector<std::pair<std::size_t, std::uint8_t>> storage;
  for (std::uint32_t li = 0; li < layer_count; ++li) {
    InferenceLayer l;
    const std::uint8_t kind = r.u8();
    const std::uint8_t store = r.u8();
    const std::uint8_t quantizer = r.u8();
    const std::uint8_t has_bias = r.u8();
    if (kind == kKindDense) {
      DenseShape d;
      d.in = r.u32();
      d.out = r.u32();
      l.kind = d;
    } else if (kind == kKindConv) {
      ConvShape c;
      c.filters = r.u32();
      c.channels = r.u32();
      c.kernel_h = r.u32();
      c.kernel_w = r.u32();
      c.stride = r.u32();
      c.padding = r.u32();
      l.kind = c;
    } else {
      throw CorruptModelError("layer " + std::to_string(li) + ": unknown kind " +
                              std::to_string(kind));
    }
    if (quantizer > static_cast<std::uint8_t>(QuantizerKind::StochasticTernary)) {
      throw CorruptModelError("layer " + std::to_string(li) + ": unknown quantizer code " +
                              std::to_string(quantizer));
    }
    l.quantizer = static_cast<QuantizerKind>(quantizer);
    const Shape ws = weight_shape(l.kind);
    const std::size_t numel = shape_numel(ws);
    if (numel == 0) {
      throw CorruptModelError("layer " + std::to_string(li) + ": zero-sized weights");
    }
    if (store == kStoragePacked) {
      PackedTernaryTensor p;
      p.shape = ws;
      p.codebook.w_pos = r.f64();
      p.codebook.w_neg = r.f64();
      const std::uint32_t words = r.u32();
      if (words != packed_word_count(numel)) {
        throw CorruptModelError("layer " + std::to_string(li) + ": word count " +
                                std::to_string(words) + " does not match its shape");
      }
      r.require(words, 4, "packed weights");
      p.words.resize(words);
      for (auto& word : p.words) {
        word = r.u32();
      }
      l.weights = std::move(p);
    } else if (store == kStorageFull) {
      r.require(numel, 4, "full-precision weights");
      Tensor t(ws);
      for (double& v : t.data()) {
        v = r.f32();
      }
      l.weights = std::move(t);
    } else {
      throw CorruptModelError("layer " + std::to_string(li) + ": unknown storage " +
                              std::to_string(store));
    }
    if (has_bias > 1) {
      throw CorruptModelError("layer " + std::to_string(li) + ": bad bias flag");
    }
    if (has_bias == 1) {
      const std::size_t units = output_units(l.kind);
      r.require(units, 8, "bias");
      Tensor b(Shape{units});
      for (double& v : b.data()) {
        v = r.f64();
      }
      l.bias = std::move(b);
    }
    model.layers.push_back(std::move(l));
  }
  if (r.remaining() < 8) {
    throw TruncatedFileError("model file truncated before its checksum");
  }
  const std::size_t payload = r.pos();
  const std::uint64_t stored = r.u64();
  if (r.remaining() != 0) {
    throw CorruptModelError("trailing bytes after the model checksum");
  }
  const std::uint64_t computed = crc64(bytes.first(payload));
  if (stored != computed) {
    throw ChecksumError("model checksum mismatch");
  }
  if (flags != 0) {
    throw CorruptModelError("unsupported header flags " + std::to_string(flags));
  }
  // Semantic checks once the bytes are known to be intact.
  Shape current = model.input_shape;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const InferenceLayer& l = model.layers[i];
    if (const auto* p = std::get_if<PackedTernaryTensor>(&l.weights)) {
      unpack_partition(*p);
    }
    try {
      current = layer_output_shape(l.kind, current);
    } catch (const DimensionError& e) {
      throw CorruptModelError("layer " + std::to_string(i) + " does not compose: " + e.what());
    }
  }
  return model;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error("cannot open " + path.string());
  }
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw Error("failed writing " + path.string());
  }
}

std::uint64_t crc64(std::span<const std::uint8_t> bytes) {
  boost::crc_optimal<64, 0x42F0E1EBA9EA3693ULL, 0xFFFFFFFFFFFFFFFFULL, 0xFFFFFFFFFFFFFFFFULL, true,
                     true>
      crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

double CompressionReport::ratio() const {
  return packed_bytes == 0 ? 1.0 : static_cast<double>(full_bytes) / static_cast<double>(packed_bytes);
}

double CompressionReport::quantized_ratio() const {
  return quantized_packed_bytes == 0 ? 1.0
                                     : static_cast<double>(quantized_full_bytes) /
                                           static_cast<double>(quantized_packed_bytes);
}

CompressionReport compression_report(const InferenceModel& model) {
  CompressionReport rep;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const InferenceLayer& l = model.layers[i];
    LayerCompression lc;
    lc.layer = i;
    lc.conv = is_conv(l.kind);
    lc.quantized = l.packed();
    lc.weights = shape_numel(weight_shape(l.kind));
    lc.full_bytes = 4 * lc.weights;
    if (const auto* p = std::get_if<PackedTernaryTensor>(&l.weights)) {
      lc.width_bits = 2;
      lc.density = unpack_partition(*p).density();
      lc.packed_bytes = 4 * p->words.size() + 2 * sizeof(double);
      rep.quantized_packed_bytes += lc.packed_bytes;
      rep.quantized_full_bytes += lc.full_bytes;
    } else {
      lc.width_bits = 32;
      lc.density = 1.0;
      lc.packed_bytes = lc.full_bytes;
    }
    rep.packed_bytes += lc.packed_bytes;
    rep.full_bytes += lc.full_bytes;
    rep.layers.push_back(lc);
  }
  rep.file_bytes = serialize(model).size();
  return rep;
}

}  // namespace ttq
