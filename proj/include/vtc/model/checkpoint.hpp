#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "vtc/errors.hpp"
#include "vtc/fileio.hpp"
#include "vtc/model/transformer.hpp"

namespace vtc {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

/// Which pipeline stage produced a checkpoint.
enum class TrainingStage : std::uint32_t { initial = 0, restore, warmup, global_hnm, judge_ft, reranker };

inline const char* stage_name(TrainingStage s) {
  switch (s) {
    case TrainingStage::initial: return "initial";
    case TrainingStage::restore: return "restore";
    case TrainingStage::warmup: return "warmup";
    case TrainingStage::global_hnm: return "global_hnm";
    case TrainingStage::judge_ft: return "judge_ft";
    case TrainingStage::reranker: return "reranker";
  }
  return "unknown";
}

inline TrainingStage parse_stage(std::string_view name) {
  for (auto s : {TrainingStage::initial, TrainingStage::restore, TrainingStage::warmup, TrainingStage::global_hnm,
                 TrainingStage::judge_ft, TrainingStage::reranker}) {
    if (name == stage_name(s)) return s;
  }
  throw ConfigError("unknown stage '" + std::string(name) + "'");
}

struct Checkpoint {
  Model model;
  TrainingStage stage = TrainingStage::initial;
};

namespace checkpoint_format {

inline constexpr char kMagic[8] = {'V', 'T', 'C', 'M', 'O', 'D', 'E', 'L'};
inline constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  template <class T>
  void put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void put_bytes(std::string_view s) { out_.append(s); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  template <class T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string_view get_bytes(std::size_t n, const char* what) {
    need(n, what);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (pos_ + n > in_.size()) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what + " at byte " + std::to_string(pos_));
    }
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace checkpoint_format

/// Binary layout (little-endian):
///   magic "VTCMODEL", u32 version, u32 stage,
///   u64 x 9 config fields, u64 seed,
///   u32 tensor count, then per tensor: u32 name length, name bytes,
///   u32 rank, u64 dims[rank], f64 values[prod(dims)].
inline std::string encode_checkpoint(const Model& model, TrainingStage stage) {
  using checkpoint_format::Writer;
  Writer w;
  w.put_bytes(std::string_view(checkpoint_format::kMagic, 8));
  w.put<std::uint32_t>(checkpoint_format::kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(stage));
  const ModelConfig& c = model.config();
  for (std::uint64_t v : {c.vocab_size, c.embed_dim, c.num_layers, c.num_heads, c.grid_height, c.grid_width,
                          c.vision_channels, c.compression, c.max_seq_len}) {
    w.put<std::uint64_t>(v);
  }
  w.put<std::uint64_t>(c.seed);
  std::uint32_t count = 0;
  model.weights().visit([&](const std::string&, const Tensor&) { ++count; });
  w.put<std::uint32_t>(count);
  model.weights().visit([&](const std::string& name, const Tensor& t) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.put_bytes(name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.put<std::uint64_t>(d);
    for (double v : t.data()) w.put<double>(v);
  });
  return w.take();
}

inline Checkpoint decode_checkpoint(std::string_view bytes) {
  checkpoint_format::Reader r(bytes);
  if (r.get_bytes(8, "magic") != std::string_view(checkpoint_format::kMagic, 8)) {
    throw FormatError("not a model checkpoint (bad magic)");
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != checkpoint_format::kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto stage_raw = r.get<std::uint32_t>("stage");
  if (stage_raw > static_cast<std::uint32_t>(TrainingStage::reranker)) {
    throw FormatError("unknown stage tag " + std::to_string(stage_raw));
  }
  ModelConfig c;
  for (std::size_t* f : {&c.vocab_size, &c.embed_dim, &c.num_layers, &c.num_heads, &c.grid_height, &c.grid_width,
                         &c.vision_channels, &c.compression, &c.max_seq_len}) {
    *f = static_cast<std::size_t>(r.get<std::uint64_t>("config"));
  }
  c.seed = r.get<std::uint64_t>("seed");
  c.validate();
  ModelWeights weights = zero_weights(c);
  const auto count = r.get<std::uint32_t>("tensor count");
  std::uint32_t expected = 0;
  weights.visit([&](const std::string&, const Tensor&) { ++expected; });
  if (count != expected) {
    throw FormatError("checkpoint holds " + std::to_string(count) + " tensors, config implies " +
                      std::to_string(expected));
  }
  weights.visit([&](const std::string& name, Tensor& t) {
    const auto len = r.get<std::uint32_t>("name length");
    const auto got = r.get_bytes(len, "name");
    if (got != name) throw FormatError("expected tensor '" + name + "', found '" + std::string(got) + "'");
    const auto rank = r.get<std::uint32_t>("rank");
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>("dims"));
    if (shape != t.shape()) {
      throw FormatError("tensor '" + name + "' has shape " + shape_string(shape) + ", expected " +
                        shape_string(t.shape()));
    }
    for (double& v : t.data()) v = r.get<double>("values");
  });
  if (!r.done()) throw FormatError("trailing bytes after checkpoint payload");
  return {Model(c, std::move(weights)), static_cast<TrainingStage>(stage_raw)};
}

inline void save_checkpoint(const std::filesystem::path& path, const Model& model, TrainingStage stage) {
  write_file_atomic(path, encode_checkpoint(model, stage));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace vtc
