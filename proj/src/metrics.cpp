#include "ggd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>

#include "ggd/error.hpp"
#include "ggd/parallel.hpp"

namespace ggd {

namespace {

using NgramCounts = std::map<std::vector<TokenId>, std::size_t>;

NgramCounts count_ngrams(std::span<const TokenId> s, std::size_t n) {
  NgramCounts out;
  for (std::size_t i = 0; i + n <= s.size(); ++i) {
    ++out[std::vector<TokenId>(s.begin() + static_cast<std::ptrdiff_t>(i),
                               s.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return out;
}

double brevity_penalty(double hyp_len, double ref_len) {
  return hyp_len >= ref_len ? 1.0 : std::exp(1.0 - ref_len / hyp_len);
}

}  // namespace

BleuStats& BleuStats::operator+=(const BleuStats& o) {
  for (std::size_t n = 0; n < kBleuOrder; ++n) {
    matches[n] += o.matches[n];
    totals[n] += o.totals[n];
  }
  hyp_len += o.hyp_len;
  ref_len += o.ref_len;
  return *this;
}

Sentence bleu_tokens(std::span<const TokenId> s) {
  Sentence out;
  for (const TokenId t : s) {
    if (t == kEos) break;
    if (t != kPad) out.push_back(t);
  }
  return out;
}

BleuStats bleu_stats(std::span<const TokenId> hyp_in, std::span<const TokenId> ref_in) {
  const Sentence hyp = bleu_tokens(hyp_in);
  const Sentence ref = bleu_tokens(ref_in);
  BleuStats s;
  s.hyp_len = hyp.size();
  s.ref_len = ref.size();
  for (std::size_t n = 1; n <= kBleuOrder; ++n) {
    const NgramCounts h = count_ngrams(hyp, n);
    const NgramCounts r = count_ngrams(ref, n);
    std::size_t matched = 0;
    for (const auto& [gram, c] : h) {
      auto it = r.find(gram);
      if (it != r.end()) matched += std::min(c, it->second);
    }
    s.matches[n - 1] = matched;
    s.totals[n - 1] = hyp.size() >= n ? hyp.size() - n + 1 : 0;
  }
  return s;
}

double sentence_bleu_smoothed(std::span<const TokenId> hyp, std::span<const TokenId> ref) {
  const BleuStats s = bleu_stats(hyp, ref);
  if (s.ref_len == 0) throw InputError("sentence_bleu_smoothed: empty reference");
  if (s.hyp_len == 0 || s.matches[0] == 0) return 0.0;
  double log_sum = std::log(static_cast<double>(s.matches[0]) / static_cast<double>(s.totals[0]));
  for (std::size_t n = 1; n < kBleuOrder; ++n) {
    log_sum += std::log((static_cast<double>(s.matches[n]) + 1.0) /
                        (static_cast<double>(s.totals[n]) + 1.0));
  }
  const double bp = brevity_penalty(static_cast<double>(s.hyp_len), static_cast<double>(s.ref_len));
  return std::min(1.0, bp * std::exp(log_sum / static_cast<double>(kBleuOrder)));
}

double bleu_from_stats(const BleuStats& s) {
  if (s.hyp_len == 0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < kBleuOrder; ++n) {
    if (s.matches[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(s.matches[n]) / static_cast<double>(s.totals[n]));
  }
  const double bp = brevity_penalty(static_cast<double>(s.hyp_len), static_cast<double>(s.ref_len));
  return std::min(1.0, bp * std::exp(log_sum / static_cast<double>(kBleuOrder)));
}

double corpus_bleu(std::span<const HypRef> pairs) {
  if (pairs.empty()) throw InputError("corpus_bleu: empty corpus");
  BleuStats total;
  for (const auto& p : pairs) total += bleu_stats(p.hyp, p.ref);
  return bleu_from_stats(total);
}

double corpus_bleu(std::span<const Sentence> hyps, std::span<const Sentence> refs) {
  if (hyps.size() != refs.size()) {
    throw InputError("corpus_bleu: " + std::to_string(hyps.size()) + " hypotheses for " +
                     std::to_string(refs.size()) + " references");
  }
  std::vector<HypRef> pairs;
  pairs.reserve(hyps.size());
  for (std::size_t i = 0; i < hyps.size(); ++i) pairs.push_back({hyps[i], refs[i]});
  return corpus_bleu(pairs);
}

double avg_log_likelihood(const ModelParams& params, std::span<const SentencePair> pairs,
                          std::size_t threads) {
  if (pairs.empty()) throw InputError("avg_log_likelihood: empty corpus");
  std::vector<double> lp(pairs.size());
  std::vector<std::size_t> len(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t i) {
    const auto& y = pairs[i].target;
    lp[i] = log_prob(params, pairs[i].source, y);
    len[i] = static_cast<std::size_t>(std::count_if(y.begin(), y.end(),
                                                    [](TokenId t) { return t != kPad; }));
  });
  double total = 0.0;
  std::size_t tokens = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    total += lp[i];
    tokens += len[i];
  }
  return total / static_cast<double>(tokens);
}

void write_eval_report(std::ostream& out, std::span<const EvalRow> rows) {
  const auto old_precision = out.precision(17);
  out << "sentence_id,bleu,loglik,hyp_len,ref_len\n";
  for (const auto& r : rows) {
    out << r.sentence_id << ',' << r.bleu << ',' << r.loglik << ',' << r.hyp_len << ','
        << r.ref_len << '\n';
  }
  out.precision(old_precision);
}

}  // namespace ggd
