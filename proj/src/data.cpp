#include "ggd/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "ggd/error.hpp"

namespace ggd {

namespace {

constexpr const char* kReservedTokens[kNumReserved] = {"<pad>", "</s>", "<unk>"};

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

std::string symbol_name(char prefix, std::size_t i) { return prefix + std::to_string(i); }

}  // namespace

// ---------------------------------------------------------------------------
// Vocab

Vocab::Vocab() {
  for (const char* t : kReservedTokens) add(t);
}

Vocab::Vocab(std::span<const std::string> tokens) : Vocab() {
  for (const auto& t : tokens) {
    if (index_.contains(t)) throw InputError("duplicate vocabulary token '" + t + "'");
    add(t);
  }
}

void Vocab::add(std::string token) {
  index_.emplace(token, static_cast<TokenId>(tokens_.size()));
  tokens_.push_back(std::move(token));
}

Vocab Vocab::load(const std::filesystem::path& path) {
  auto lines = read_lines(path);
  for (const auto& l : lines) {
    if (l.empty() || l.find_first_of(" \t") != std::string::npos) {
      throw InputError("vocabulary " + path.string() + ": malformed token line '" + l + "'");
    }
  }
  return Vocab(lines);
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  for (const auto& t : ordinary_tokens()) out << t << '\n';
}

TokenId Vocab::id(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(TokenId id) const {
  if (id >= tokens_.size()) throw InputError("token id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

Sentence Vocab::encode(std::string_view line) const {
  Sentence ids;
  std::istringstream in{std::string(line)};
  std::string tok;
  while (in >> tok) ids.push_back(id(tok));
  return ids;
}

std::string Vocab::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (const TokenId t : ids) {
    if (t == kEos) break;
    if (t == kPad) continue;
    if (!out.empty()) out += ' ';
    out += token(t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Corpus

std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kValid:
      return "valid";
    case Split::kTest:
      return "test";
  }
  return "?";
}

void Corpus::validate(std::size_t source_vocab, std::size_t target_vocab) const {
  auto check = [](const Sentence& s, std::size_t vocab, std::size_t n, const char* side) {
    if (s.empty() || s.back() != kEos) {
      throw InputError(std::string(side) + " sentence " + std::to_string(n) +
                       " does not end with EOS");
    }
    for (const TokenId t : s) {
      if (t >= vocab) {
        throw InputError(std::string(side) + " sentence " + std::to_string(n) + ": id " +
                         std::to_string(t) + " outside vocabulary of size " +
                         std::to_string(vocab));
      }
    }
  };
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    check(pairs[i].source, source_vocab, i, "source");
    check(pairs[i].target, target_vocab, i, "target");
  }
}

std::span<const TokenId> content_tokens(std::span<const TokenId> s) {
  std::size_t n = s.size();
  while (n > 0 && s[n - 1] == kPad) --n;
  if (n > 0 && s[n - 1] == kEos) --n;
  return s.first(n);
}

void SyntheticTaskSpec::validate() const {
  if (vocab_size < 4) {
    throw ConfigError("synthetic task needs vocab_size >= 4 (3 reserved ids + 1 symbol)");
  }
  if (min_len < 1 || max_len < min_len) throw ConfigError("synthetic task: bad length range");
  if (swap_prob < 0.0 || swap_prob > 1.0) throw ConfigError("synthetic task: swap_prob not in [0,1]");
  // The number of distinct sources bounds the total corpus size.
  const double symbols = static_cast<double>(vocab_size - kNumReserved);
  double distinct = 0.0;
  for (std::size_t len = min_len; len <= max_len && distinct < 1e18; ++len) {
    distinct += std::pow(symbols, static_cast<double>(len));
  }
  if (static_cast<double>(n_train + n_valid + n_test) > distinct) {
    throw ConfigError("synthetic task: more sentences requested than distinct sources exist");
  }
}

SyntheticTask gen_synthetic(const SyntheticTaskSpec& spec) {
  spec.validate();
  const std::size_t symbols = spec.vocab_size - kNumReserved;
  std::vector<std::string> src_tokens, tgt_tokens;
  for (std::size_t i = 0; i < symbols; ++i) {
    src_tokens.push_back(symbol_name('a', i));
    tgt_tokens.push_back(symbol_name('b', i));
  }

  SyntheticTask task;
  task.source_vocab = Vocab(src_tokens);
  task.target_vocab = Vocab(tgt_tokens);

  Rng root(spec.seed);
  Rng cipher_rng = root.split("synthetic/cipher");
  Rng sample_rng = root.split("synthetic/sample");
  Rng swap_rng = root.split("synthetic/swap");

  task.cipher.resize(spec.vocab_size);
  std::iota(task.cipher.begin(), task.cipher.end(), TokenId{0});
  if (spec.cipher) {
    shuffle(std::span(task.cipher).subspan(kNumReserved), cipher_rng);
  }

  std::set<Sentence> seen;
  auto fill = [&](Corpus& c, Split split, std::size_t n) {
    c.split = split;
    c.pairs.reserve(n);
    while (c.pairs.size() < n) {
      const std::size_t len =
          spec.min_len + sample_rng.uniform_index(spec.max_len - spec.min_len + 1);
      Sentence src(len);
      for (auto& t : src) t = static_cast<TokenId>(kNumReserved + sample_rng.uniform_index(symbols));
      if (!seen.insert(src).second) continue;

      Sentence tgt(src);
      if (spec.reverse) std::reverse(tgt.begin(), tgt.end());
      for (auto& t : tgt) t = task.cipher[t];
      if (spec.swap_prob > 0.0) {
        for (std::size_t i = 0; i + 1 < tgt.size(); ++i) {
          if (swap_rng.uniform() < spec.swap_prob) {
            std::swap(tgt[i], tgt[i + 1]);
            ++i;
          }
        }
      }
      src.push_back(kEos);
      tgt.push_back(kEos);
      c.pairs.push_back({std::move(src), std::move(tgt)});
    }
  };
  fill(task.train, Split::kTrain, spec.n_train);
  fill(task.valid, Split::kValid, spec.n_valid);
  fill(task.test, Split::kTest, spec.n_test);
  return task;
}

Corpus load_corpus(const std::filesystem::path& source_path,
                   const std::filesystem::path& target_path, const Vocab& source_vocab,
                   const Vocab& target_vocab, std::size_t max_len, Split split) {
  const auto src = read_lines(source_path);
  const auto tgt = read_lines(target_path);
  if (src.size() != tgt.size()) {
    throw InputError("corpus files are not line-aligned: " + std::to_string(src.size()) +
                     " source lines vs " + std::to_string(tgt.size()) + " target lines");
  }
  Corpus c;
  c.split = split;
  for (std::size_t i = 0; i < src.size(); ++i) {
    Sentence s = source_vocab.encode(src[i]);
    Sentence t = target_vocab.encode(tgt[i]);
    if (max_len > 0 && (s.size() > max_len || t.size() > max_len)) continue;
    s.push_back(kEos);
    t.push_back(kEos);
    c.pairs.push_back({std::move(s), std::move(t)});
  }
  return c;
}

void write_sentences(const std::filesystem::path& path, std::span<const Sentence> sentences,
                     const Vocab& vocab) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  for (const auto& s : sentences) out << vocab.decode(s) << '\n';
}

void write_corpus(const std::filesystem::path& source_path,
                  const std::filesystem::path& target_path, const Corpus& corpus,
                  const Vocab& source_vocab, const Vocab& target_vocab) {
  std::vector<Sentence> src, tgt;
  for (const auto& p : corpus.pairs) {
    src.push_back(p.source);
    tgt.push_back(p.target);
  }
  write_sentences(source_path, src, source_vocab);
  write_sentences(target_path, tgt, target_vocab);
}

// ---------------------------------------------------------------------------
// Batching

SentencePair Batch::unpadded(std::size_t i) const {
  SentencePair p;
  for (std::size_t j = 0; j < source[i].size(); ++j) {
    if (source_mask[i][j]) p.source.push_back(source[i][j]);
  }
  for (std::size_t j = 0; j < target[i].size(); ++j) {
    if (target_mask[i][j]) p.target.push_back(target[i][j]);
  }
  return p;
}

Batch make_batch(const Corpus& corpus, std::span<const std::size_t> indices) {
  Batch b;
  std::size_t src_len = 0, tgt_len = 0;
  for (const auto i : indices) {
    src_len = std::max(src_len, corpus.pairs.at(i).source.size());
    tgt_len = std::max(tgt_len, corpus.pairs.at(i).target.size());
  }
  auto pad = [](const Sentence& s, std::size_t len, std::vector<Sentence>& out,
                std::vector<std::vector<std::uint8_t>>& mask) {
    Sentence p(s);
    std::vector<std::uint8_t> m(s.size(), 1);
    p.resize(len, kPad);
    m.resize(len, 0);
    out.push_back(std::move(p));
    mask.push_back(std::move(m));
  };
  for (const auto i : indices) {
    pad(corpus.pairs[i].source, src_len, b.source, b.source_mask);
    pad(corpus.pairs[i].target, tgt_len, b.target, b.target_mask);
    b.indices.push_back(i);
  }
  return b;
}

BatchIterator::BatchIterator(const Corpus& corpus, std::size_t batch_size, Rng rng)
    : corpus_(&corpus), batch_size_(batch_size), rng_(rng), order_(corpus.size()) {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (corpus.empty()) throw InputError("cannot batch an empty corpus");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  reshuffle();
}

void BatchIterator::reshuffle() { shuffle(std::span(order_), rng_); }

std::size_t BatchIterator::batches_per_epoch() const {
  return (order_.size() + batch_size_ - 1) / batch_size_;
}

Batch BatchIterator::next() {
  if (cursor_ >= order_.size()) {
    cursor_ = 0;
    ++epoch_;
    reshuffle();
  }
  const std::size_t n = std::min(batch_size_, order_.size() - cursor_);
  Batch b = make_batch(*corpus_, std::span(order_).subspan(cursor_, n));
  cursor_ += n;
  return b;
}

}  // namespace ggd
