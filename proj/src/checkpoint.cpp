#include "ggd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "ggd/error.hpp"

namespace ggd {

namespace {

class Writer {
 public:
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto n = u64();
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void expect(const char* magic, std::size_t n) {
    need(n);
    if (std::memcmp(in_.data() + pos_, magic, n) != 0) {
      throw CheckpointError("not a checkpoint (unknown magic or version)");
    }
    pos_ += n;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > in_.size() - pos_) throw CheckpointError("checkpoint is truncated");
  }

  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

void write_vocab(Writer& w, const Vocab& v) {
  const auto tokens = v.ordinary_tokens();
  w.u64(tokens.size());
  for (const auto& t : tokens) w.str(t);
}

Vocab read_vocab(Reader& r) {
  const auto n = r.u64();
  std::vector<std::string> tokens;
  tokens.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(n, 1 << 20)));
  for (std::uint64_t i = 0; i < n; ++i) tokens.push_back(r.str());
  try {
    return Vocab(tokens);
  } catch (const InputError& e) {
    throw CheckpointError(std::string("checkpoint vocabulary: ") + e.what());
  }
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  const auto& cfg = ckpt.params.config();
  Writer w;
  w.bytes(kCheckpointMagic, 8);
  w.u64(cfg.source_vocab);
  w.u64(cfg.target_vocab);
  w.u64(cfg.embed);
  w.u64(cfg.hidden);
  w.u64(cfg.attention);
  w.u64(cfg.seed);
  write_vocab(w, ckpt.source_vocab);
  write_vocab(w, ckpt.target_vocab);
  const auto tensors = ckpt.params.tensors();
  w.u64(tensors.size());
  for (const auto& t : tensors) {
    w.u64(t.rank());
    for (std::size_t d = 0; d < t.rank(); ++d) w.u64(t.shape()[d]);
    for (const double v : t.data()) w.f64(v);
  }
  w.str(ckpt.metadata);
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  r.expect(kCheckpointMagic, 8);
  ModelConfig cfg;
  cfg.source_vocab = r.u64();
  cfg.target_vocab = r.u64();
  cfg.embed = r.u64();
  cfg.hidden = r.u64();
  cfg.attention = r.u64();
  cfg.seed = r.u64();
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint config: ") + e.what());
  }

  Checkpoint ckpt;
  ckpt.source_vocab = read_vocab(r);
  ckpt.target_vocab = read_vocab(r);
  if (ckpt.source_vocab.size() != cfg.source_vocab || ckpt.target_vocab.size() != cfg.target_vocab) {
    throw CheckpointError("checkpoint vocabulary sizes disagree with its config");
  }

  const auto expected = ModelParams::shapes(cfg);
  const auto count = r.u64();
  if (count != kNumParams) throw CheckpointError("checkpoint has the wrong number of tensors");
  ModelParams params(cfg);
  for (std::size_t i = 0; i < kNumParams; ++i) {
    const auto rank = r.u64();
    if (rank != expected[i].rank()) throw CheckpointError("checkpoint tensor rank mismatch");
    for (std::size_t d = 0; d < rank; ++d) {
      if (r.u64() != expected[i][d]) {
        throw CheckpointError("checkpoint tensor " + std::string(param_name(ParamId(i))) +
                              " has unexpected shape");
      }
    }
    for (double& v : params.tensors()[i].data()) v = r.f64();
  }
  ckpt.metadata = r.str();
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint");
  try {
    params.validate();
  } catch (const ContractError& e) {
    throw CheckpointError(e.what());
  }
  ckpt.params = std::move(params);
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace ggd
