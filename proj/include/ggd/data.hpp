#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ggd/rng.hpp"

namespace ggd {

using TokenId = std::uint32_t;
using Sentence = std::vector<TokenId>;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kEos = 1;
inline constexpr TokenId kUnk = 2;
inline constexpr std::size_t kNumReserved = 3;

// Token <-> id bijection. Ids 0..2 are PAD, EOS and UNK; ordinary tokens
// start at 3.
class Vocab {
 public:
  Vocab();
  explicit Vocab(std::span<const std::string> tokens);

  // One token per line; line n (0-based) gets id n + 3.
  static Vocab load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return tokens_.size(); }
  // Id of `token`, or kUnk when absent.
  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const;
  // Ordinary (non-reserved) tokens in id order.
  std::span<const std::string> ordinary_tokens() const {
    return std::span(tokens_).subspan(kNumReserved);
  }

  // Whitespace-tokenized text to ids, without EOS.
  Sentence encode(std::string_view line) const;
  // Ids to space-separated text; stops at EOS and skips PAD.
  std::string decode(std::span<const TokenId> ids) const;

  bool operator==(const Vocab& o) const { return tokens_ == o.tokens_; }

 private:
  void add(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

enum class Split { kTrain, kValid, kTest };
std::string_view to_string(Split s);

struct SentencePair {
  Sentence source;
  Sentence target;
};

// Aligned source/target id sequences; every sequence ends with EOS.
struct Corpus {
  Split split = Split::kTrain;
  std::vector<SentencePair> pairs;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
  // Throws InputError unless all ids are in range and every sequence ends
  // with EOS.
  void validate(std::size_t source_vocab, std::size_t target_vocab) const;
};

// Strips trailing PAD and the final EOS.
std::span<const TokenId> content_tokens(std::span<const TokenId> s);

struct SyntheticTaskSpec {
  std::size_t vocab_size = 30;  // including the three reserved ids
  std::size_t min_len = 4;
  std::size_t max_len = 12;
  bool reverse = true;
  bool cipher = true;
  double swap_prob = 0.0;  // probability of swapping each adjacent target pair
  std::size_t n_train = 10000;
  std::size_t n_valid = 1000;
  std::size_t n_test = 1000;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SyntheticTask {
  Vocab source_vocab;
  Vocab target_vocab;
  Corpus train;
  Corpus valid;
  Corpus test;
  // cipher[i] is the target id emitted for source id i (reserved ids map to
  // themselves).
  std::vector<TokenId> cipher;
};

// source: uniform random symbols; target: cipher(reverse(source)) with
// optional local swaps. Source sentences are unique across all splits.
SyntheticTask gen_synthetic(const SyntheticTaskSpec& spec);

// Line-aligned, whitespace-tokenized files. Unknown tokens map to UNK and
// EOS is appended. Pairs where either side has more than `max_len` tokens
// are dropped (max_len == 0 disables the cap).
Corpus load_corpus(const std::filesystem::path& source_path,
                   const std::filesystem::path& target_path, const Vocab& source_vocab,
                   const Vocab& target_vocab, std::size_t max_len = 0,
                   Split split = Split::kTrain);

// Writes one sentence per line (EOS stripped).
void write_sentences(const std::filesystem::path& path, std::span<const Sentence> sentences,
                     const Vocab& vocab);
void write_corpus(const std::filesystem::path& source_path,
                  const std::filesystem::path& target_path, const Corpus& corpus,
                  const Vocab& source_vocab, const Vocab& target_vocab);

// PAD-padded batch. Masks are 1 on real tokens (including EOS), 0 on PAD.
struct Batch {
  std::vector<Sentence> source;
  std::vector<Sentence> target;
  std::vector<std::vector<std::uint8_t>> source_mask;
  std::vector<std::vector<std::uint8_t>> target_mask;
  // Positions of the sentences in the originating corpus.
  std::vector<std::size_t> indices;

  std::size_t size() const { return source.size(); }
  // The i-th pair with padding removed.
  SentencePair unpadded(std::size_t i) const;
};

Batch make_batch(const Corpus& corpus, std::span<const std::size_t> indices);

// Endless stream of batches. The corpus order is reshuffled with the
// iterator's own Rng at the start of every epoch; the final batch of an
// epoch may be smaller than batch_size.
class BatchIterator {
 public:
  BatchIterator(const Corpus& corpus, std::size_t batch_size, Rng rng);

  Batch next();
  std::size_t epoch() const { return epoch_; }
  std::size_t batches_per_epoch() const;

 private:
  void reshuffle();

  const Corpus* corpus_;
  std::size_t batch_size_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

}  // namespace ggd
