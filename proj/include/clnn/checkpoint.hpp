#pragma once

// "CLNN-CKPT v1": magic "CLNN0001"; little-endian u32 version, vocab size, d,
// L, N, u; u64 vocabulary hash; then per tensor: u16 name length, name bytes,
// u32 rank, u32 dims..., raw f32 values.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "clnn/io.hpp"
#include "clnn/model.hpp"

namespace clnn {

inline constexpr std::string_view kCheckpointMagic = "CLNN0001";
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <class U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) throw CheckpointError(std::string("truncated checkpoint while reading ") + what);
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

template <class T>
std::string serialize_checkpoint(const CLNNModel<T>& m) {
  std::string out(kCheckpointMagic);
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.vocab_size));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.config.d));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.config.layers));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.config.expand));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.config.hidden()));
  detail::put_le<std::uint64_t>(out, m.vocab_hash);
  for (const auto* p : m.params()) {
    detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(p->name.size()));
    out += p->name;
    detail::put_le<std::uint32_t>(out, 2);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p->rows()));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p->cols()));
    for (Eigen::Index i = 0; i < p->size(); ++i)
      detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(p->value.data()[i])));
  }
  return out;
}

/// Shape fields a caller expects a checkpoint to have.
struct ArchitectureExpectation {
  std::optional<std::size_t> d, layers, expand, hidden, vocab_size;
  std::optional<std::uint64_t> vocab_hash;
};

/// Parses a checkpoint; architecture-dependent config fields come from the
/// header, the rest keep their defaults (the meta sidecar carries them).
template <class T = float>
CLNNModel<T> parse_checkpoint(std::string_view bytes, const ArchitectureExpectation& expect = {}) {
  detail::Reader r(bytes);
  auto magic = r.take(kCheckpointMagic.size(), "magic");
  if (magic != kCheckpointMagic)
    throw CheckpointError("bad checkpoint magic: expected '" + std::string(kCheckpointMagic) + "'");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  CLNNConfig cfg;
  const auto vocab = r.get<std::uint32_t>("vocab size");
  cfg.d = r.get<std::uint32_t>("d");
  cfg.layers = r.get<std::uint32_t>("layer count");
  cfg.expand = r.get<std::uint32_t>("expand ratio");
  cfg.lstm_hidden = r.get<std::uint32_t>("lstm hidden size");
  const auto hash = r.get<std::uint64_t>("vocabulary hash");

  auto mismatch = [](const char* field, std::size_t want, std::size_t got) {
    throw ShapeError(std::string("checkpoint ") + field + " is " + std::to_string(got) + ", config expects " +
                     std::to_string(want));
  };
  if (expect.d && *expect.d != cfg.d) mismatch("d", *expect.d, cfg.d);
  if (expect.layers && *expect.layers != cfg.layers) mismatch("layer count", *expect.layers, cfg.layers);
  if (expect.expand && *expect.expand != cfg.expand) mismatch("expand ratio", *expect.expand, cfg.expand);
  if (expect.hidden && *expect.hidden != cfg.hidden()) mismatch("lstm hidden size", *expect.hidden, cfg.hidden());
  if (expect.vocab_size && *expect.vocab_size != vocab) mismatch("vocabulary size", *expect.vocab_size, vocab);
  if (expect.vocab_hash && *expect.vocab_hash != hash)
    throw CheckpointError("checkpoint was trained against a different vocabulary (hash " + io::hex64(hash) + ")");
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint header is invalid: ") + e.what());
  }

  // Build the skeleton for the expected tensor list, then fill it.
  Vocabulary dummy;
  CLNNModel<T> m;
  m.config = cfg;
  m.vocab_size = vocab;
  m.vocab_hash = hash;
  {
    CLNNConfig shape_cfg = cfg;
    auto skeleton = init_model<T>(shape_cfg, dummy);
    m.layers = std::move(skeleton.layers);
    m.embedding = Param<T>("embedding", vocab, static_cast<Eigen::Index>(cfg.d));
    m.out_w = Param<T>("output.w", static_cast<Eigen::Index>(cfg.d), vocab);
    m.out_b = Param<T>("output.b", 1, vocab);
  }
  for (auto* p : m.params()) {
    const auto len = r.get<std::uint16_t>("tensor name length");
    const auto name = std::string(r.take(len, "tensor name"));
    if (name != p->name) throw CheckpointError("expected tensor '" + p->name + "', found '" + name + "'");
    const auto rank = r.get<std::uint32_t>("tensor rank");
    if (rank != 2) throw CheckpointError("tensor '" + name + "' has rank " + std::to_string(rank));
    const auto rows = r.get<std::uint32_t>("tensor dims");
    const auto cols = r.get<std::uint32_t>("tensor dims");
    if (rows != p->rows() || cols != p->cols())
      throw ShapeError("tensor '" + name + "' is " + std::to_string(rows) + "x" + std::to_string(cols) +
                       ", header implies " + std::to_string(p->rows()) + "x" + std::to_string(p->cols()));
    for (Eigen::Index i = 0; i < p->size(); ++i)
      p->value.data()[i] = static_cast<T>(std::bit_cast<float>(r.get<std::uint32_t>("tensor values")));
    p->zero_grad();
  }
  if (!r.done()) throw CheckpointError("trailing bytes after the last tensor");
  return m;
}

template <class T>
void save_checkpoint(const CLNNModel<T>& m, const std::filesystem::path& path) {
  io::write_file_atomic(path, serialize_checkpoint(m));
}

template <class T = float>
CLNNModel<T> load_checkpoint(const std::filesystem::path& path, const ArchitectureExpectation& expect = {}) {
  return parse_checkpoint<T>(io::read_file(path), expect);
}

/// Sidecar path: "model.ckpt" -> "model.meta.json".
inline std::filesystem::path meta_path(const std::filesystem::path& ckpt) {
  auto p = ckpt;
  p.replace_extension(".meta.json");
  return p;
}

}  // namespace clnn
