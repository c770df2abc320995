#ifndef MRSEG_CHECKPOINT_HPP
#define MRSEG_CHECKPOINT_HPP

/// \file checkpoint.hpp
/// \brief Binary checkpoint of encoder parameters plus training config.
///
/// Layout, all integers little-endian:
///
///     "MRSG"                      4 bytes magic
///     u32 version                 currently 1
///     u64 n, n bytes              TrainConfig + layer strides as JSON
///     u32 tensor count
///     per tensor:
///       u32 n, n bytes            name ("layer0.weight", "layer0.bias", ...)
///       u32 rank
///       u64 dims[rank]
///       f64 payload[prod(dims)]   IEEE-754 binary64, little-endian

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "json.hpp"
#include "mrseg/encoder.hpp"
#include "mrseg/errors.hpp"
#include "mrseg/pipeline.hpp"

namespace mrseg {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'M', 'R', 'S', 'G'};

inline nlohmann::ordered_json to_json(const TrainConfig& c) {
  return {{"episodes", c.episodes},   {"batch", c.batch},
          {"lambda", c.lambda},       {"splits", c.splits},
          {"c_out", c.c_out},         {"bias", c.bias},
          {"bce_weight", c.bce_weight}, {"lr", c.lr},
          {"momentum", c.momentum},   {"weight_decay", c.weight_decay},
          {"seed", c.seed},           {"checkpoint_every", c.checkpoint_every}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.episodes = j.at("episodes").get<std::size_t>();
  c.batch = j.at("batch").get<std::size_t>();
  c.lambda = j.at("lambda").get<double>();
  c.splits = j.at("splits").get<std::size_t>();
  c.c_out = j.at("c_out").get<std::size_t>();
  c.bias = j.at("bias").get<bool>();
  c.bce_weight = j.at("bce_weight").get<double>();
  c.lr = j.at("lr").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.checkpoint_every = j.at("checkpoint_every").get<std::size_t>();
  return c;
}

namespace detail {

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str32(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  const std::vector<std::uint8_t>& buffer() const { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& in) : in_(in) {}

  void need(std::size_t n, const char* what) const {
    if (in_.size() - pos_ < n)
      throw CheckpointError(CheckpointError::Kind::kTruncated,
                            std::string("checkpoint truncated while reading ") + what);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::string str(std::uint64_t n, const char* what) {
    need(n, what);
    std::string s(in_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  in_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == in_.size(); }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize_checkpoint(const EncoderParams& params,
                                                      const TrainConfig& cfg) {
  detail::ByteWriter w;
  w.bytes(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  nlohmann::ordered_json meta = to_json(cfg);
  meta["in_channels"] = params.in_channels();
  meta["strides"] = nlohmann::ordered_json::array();
  for (const auto& l : params.layers) meta["strides"].push_back(l.stride);
  const std::string meta_str = meta.dump();
  w.u64(meta_str.size());
  w.bytes(meta_str.data(), meta_str.size());
  w.u32(static_cast<std::uint32_t>(params.layers.size() * 2));
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& l = params.layers[i];
    w.str32("layer" + std::to_string(i) + ".weight");
    w.u32(4);
    for (std::uint64_t d : {std::uint64_t(l.out_ch), std::uint64_t(l.in_ch), std::uint64_t(kKernel),
                            std::uint64_t(kKernel)})
      w.u64(d);
    for (double v : l.kernels) w.f64(v);
    w.str32("layer" + std::to_string(i) + ".bias");
    w.u32(1);
    w.u64(l.out_ch);
    for (double v : l.bias) w.f64(v);
  }
  return w.buffer();
}

inline Model deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  using Kind = CheckpointError::Kind;
  detail::ByteReader r(bytes);
  if (r.str(4, "magic") != std::string(kCheckpointMagic, 4))
    throw CheckpointError(Kind::kBadMagic, "not a checkpoint: bad magic");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion)
    throw CheckpointError(Kind::kUnsupportedVersion,
                          "unsupported checkpoint version " + std::to_string(version));
  const std::uint64_t meta_len = r.u64("config length");
  Model m;
  std::vector<std::size_t> strides;
  std::size_t in_ch = 0;
  try {
    const auto meta = nlohmann::json::parse(r.str(meta_len, "config"));
    m.config = train_config_from_json(meta);
    strides = meta.at("strides").get<std::vector<std::size_t>>();
    in_ch = meta.at("in_channels").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(Kind::kMalformed, std::string("malformed checkpoint config: ") + e.what());
  }
  const std::uint32_t count = r.u32("tensor count");
  if (count != strides.size() * 2)
    throw CheckpointError(Kind::kMalformed, "tensor count does not match layer count");
  std::size_t prev = in_ch;
  for (std::size_t i = 0; i < strides.size(); ++i) {
    ConvLayer layer;
    for (int part = 0; part < 2; ++part) {
      const std::string name = r.str(r.u32("name length"), "tensor name");
      const std::string expected = "layer" + std::to_string(i) + (part == 0 ? ".weight" : ".bias");
      if (name != expected)
        throw CheckpointError(Kind::kMalformed, "expected tensor " + expected + ", found " + name);
      const std::uint32_t rank = r.u32("rank");
      if (rank != (part == 0 ? 4u : 1u))
        throw CheckpointError(Kind::kMalformed, "tensor " + name + " has rank " + std::to_string(rank));
      std::vector<std::uint64_t> dims(rank);
      for (auto& d : dims) d = r.u64("dims");
      if (part == 0) {
        if (dims[1] != prev || dims[2] != kKernel || dims[3] != kKernel)
          throw CheckpointError(Kind::kMalformed, "tensor " + name + " has inconsistent dims");
        if (dims[0] == 0 || dims[0] > (1u << 20) || dims[1] > (1u << 20))
          throw CheckpointError(Kind::kMalformed, "tensor " + name + " has implausible dims");
        r.need(dims[0] * dims[1] * kKernel * kKernel * 8, "tensor payload");
        try {
          layer = ConvLayer(dims[1], dims[0], strides[i]);
        } catch (const ConfigError& e) {
          throw CheckpointError(Kind::kMalformed, e.what());
        }
        for (double& v : layer.kernels) v = r.f64("tensor payload");
      } else {
        if (dims[0] != layer.out_ch)
          throw CheckpointError(Kind::kMalformed, "tensor " + name + " has inconsistent dims");
        r.need(layer.bias.size() * 8, "tensor payload");
        for (double& v : layer.bias) v = r.f64("tensor payload");
      }
    }
    prev = layer.out_ch;
    m.params.layers.push_back(std::move(layer));
  }
  if (!r.at_end()) throw CheckpointError(Kind::kMalformed, "trailing bytes after checkpoint");
  return m;
}

inline void save_checkpoint(const std::filesystem::path& path, const EncoderParams& params,
                            const TrainConfig& cfg) {
  const auto bytes = serialize_checkpoint(params, cfg);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

inline Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace mrseg

#endif  // MRSEG_CHECKPOINT_HPP
