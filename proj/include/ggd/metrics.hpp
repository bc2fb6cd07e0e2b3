#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "ggd/data.hpp"
#include "ggd/model.hpp"

namespace ggd {

inline constexpr std::size_t kBleuOrder = 4;

// Clipped n-gram statistics of one or more hypothesis/reference pairs.
// Tokens are compared as ids; EOS and PAD never take part in n-grams.
struct BleuStats {
  std::array<std::size_t, kBleuOrder> matches{};
  std::array<std::size_t, kBleuOrder> totals{};
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;

  BleuStats& operator+=(const BleuStats& o);
};

// Strips everything from the first EOS on, and any PAD.
Sentence bleu_tokens(std::span<const TokenId> s);

BleuStats bleu_stats(std::span<const TokenId> hyp, std::span<const TokenId> ref);

// BLEU-4, add-one smoothing on matches and totals for n >= 2 (unigram
// precision unsmoothed), brevity penalty min(1, exp(1 - r/h)). An empty
// hypothesis scores 0; an empty reference is an InputError.
double sentence_bleu_smoothed(std::span<const TokenId> hyp, std::span<const TokenId> ref);

// Unsmoothed BLEU-4 from aggregated counts.
double bleu_from_stats(const BleuStats& s);

struct HypRef {
  std::span<const TokenId> hyp;
  std::span<const TokenId> ref;
};

// Standard corpus BLEU-4. Throws InputError on an empty corpus.
double corpus_bleu(std::span<const HypRef> pairs);
double corpus_bleu(std::span<const Sentence> hyps, std::span<const Sentence> refs);

// Mean per-token log p(Y|X) (EOS counts as a token).
double avg_log_likelihood(const ModelParams& params, std::span<const SentencePair> pairs,
                          std::size_t threads = 0);

struct EvalRow {
  std::size_t sentence_id = 0;
  double bleu = 0.0;
  double loglik = 0.0;
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;
};

// sentence_id,bleu,loglik,hyp_len,ref_len
void write_eval_report(std::ostream& out, std::span<const EvalRow> rows);

}  // namespace ggd
