#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "ggd/error.hpp"
#include "ggd/metrics.hpp"
#include "support/reference_model.hpp"

namespace ggd {
namespace {

// Independent scorer over words, written from the textbook definition.
struct RefBleu {
  static std::vector<std::string> words(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(w);
    return out;
  }
  static std::map<std::vector<std::string>, int> grams(const std::vector<std::string>& w, int n) {
    std::map<std::vector<std::string>, int> m;
    for (int i = 0; i + n <= static_cast<int>(w.size()); ++i) ++m[{w.begin() + i, w.begin() + i + n}];
    return m;
  }
  double m[4] = {}, t[4] = {}, h = 0, r = 0;

  void add(const std::string& hyp, const std::string& ref) {
    const auto hw = words(hyp), rw = words(ref);
    h += hw.size();
    r += rw.size();
    for (int n = 1; n <= 4; ++n) {
      const auto hg = grams(hw, n), rg = grams(rw, n);
      for (const auto& [g, c] : hg) {
        t[n - 1] += c;
        const auto it = rg.find(g);
        if (it != rg.end()) m[n - 1] += std::min(c, it->second);
      }
    }
  }
  double score(bool smooth) const {
    double logp = 0.0;
    for (int n = 0; n < 4; ++n) {
      const double add = smooth && n > 0 ? 1.0 : 0.0;
      if (m[n] + add == 0.0) return 0.0;
      logp += std::log((m[n] + add) / (t[n] + add)) / 4.0;
    }
    return std::exp(logp) * std::min(1.0, std::exp(1.0 - r / h));
  }
};

// Letters a.. map to ids 3..
Sentence ids(const std::string& s) {
  Sentence out;
  for (const auto& w : RefBleu::words(s)) out.push_back(static_cast<TokenId>(3 + (w[0] - 'a')));
  return out;
}

double ref_sentence(const std::string& h, const std::string& r) {
  RefBleu b;
  b.add(h, r);
  return b.score(true);
}

TEST(Metrics, SmoothedSentenceOracle) {
  // All n-gram precisions are 1 after smoothing; only the brevity penalty
  // exp(1 - 5/4) remains.
  EXPECT_NEAR(sentence_bleu_smoothed(ids("a b c d"), ids("a b c d e")), 0.7788007830714049, 1e-15);
  EXPECT_NEAR(ref_sentence("a b c d", "a b c d e"), 0.7788007830714049, 1e-15);
  for (const auto& [h, r] : std::vector<std::pair<std::string, std::string>>{
           {"a b c d e f", "a b d c e f"}, {"a a a b", "a b a"}, {"c b a", "a b c d e f g"},
           {"a b c a b c", "a b c"}, {"b", "b"}, {"a b", "a c"}}) {
    EXPECT_NEAR(sentence_bleu_smoothed(ids(h), ids(r)), ref_sentence(h, r), 1e-14) << h << " | " << r;
  }
}

TEST(Metrics, SentenceEdgeCases) {
  EXPECT_DOUBLE_EQ(sentence_bleu_smoothed(ids("a b c"), ids("a b c")), 1.0);
  EXPECT_EQ(sentence_bleu_smoothed(ids("a b c"), ids("d e f")), 0.0);
  EXPECT_EQ(sentence_bleu_smoothed(Sentence{}, ids("a")), 0.0);
  EXPECT_EQ(sentence_bleu_smoothed(Sentence{kEos}, ids("a")), 0.0);
  EXPECT_THROW(sentence_bleu_smoothed(ids("a"), Sentence{}), InputError);
  EXPECT_THROW(sentence_bleu_smoothed(ids("a"), Sentence{kEos, kPad}), InputError);
}

TEST(Metrics, EosAndPadDoNotCount) {
  Sentence h = ids("a b c d");
  Sentence r = ids("a b c d e");
  const double base = sentence_bleu_smoothed(h, r);
  h.push_back(kEos);
  h.push_back(kPad);
  r.push_back(kEos);
  EXPECT_EQ(sentence_bleu_smoothed(h, r), base);
  // Anything after the first EOS is ignored.
  Sentence tail = ids("a b c d");
  tail.push_back(kEos);
  tail.push_back(7);
  EXPECT_EQ(sentence_bleu_smoothed(tail, r), base);
  EXPECT_EQ(bleu_tokens(Sentence{3, kPad, 4, kEos, 5}), (Sentence{3, 4}));
}

TEST(Metrics, CorpusBleu) {
  const std::vector<Sentence> refs{ids("a b c d e"), ids("f g h i")};
  EXPECT_DOUBLE_EQ(corpus_bleu(refs, refs), 1.0);

  // Two sentences where pooling counts differs from averaging scores.
  const std::vector<Sentence> hyps{ids("a b c d e"), ids("f g i h")};
  RefBleu pooled;
  pooled.add("a b c d e", "a b c d e");
  pooled.add("f g i h", "f g h i");
  const double corpus = corpus_bleu(hyps, refs);
  EXPECT_NEAR(corpus, pooled.score(false), 1e-14);
  // The second sentence alone has no 4-gram match, so its own score is 0
  // and the mean is exactly 0.5; pooled counts keep the corpus above that.
  const double mean = 0.5 * (corpus_bleu(std::vector<Sentence>{hyps[0]}, std::vector<Sentence>{refs[0]}) +
                             corpus_bleu(std::vector<Sentence>{hyps[1]}, std::vector<Sentence>{refs[1]}));
  EXPECT_EQ(mean, 0.5);
  EXPECT_GT(corpus, 0.6);

  EXPECT_THROW(corpus_bleu(std::vector<Sentence>{}, std::vector<Sentence>{}), InputError);
  EXPECT_THROW(corpus_bleu(hyps, std::vector<Sentence>{refs[0]}), InputError);
}

TEST(Metrics, SingleSentenceCorpusIsUnsmoothedSentence) {
  const auto h = ids("a b c d e");
  const auto r = ids("a b c d e f");
  const std::vector<Sentence> hs{h}, rs{r};
  EXPECT_DOUBLE_EQ(corpus_bleu(hs, rs), bleu_from_stats(bleu_stats(h, r)));
  EXPECT_NEAR(corpus_bleu(hs, rs), std::exp(1.0 - 6.0 / 5.0), 1e-15);
  // With full n >= 2 matches the add-one smoothing changes nothing.
  EXPECT_NEAR(sentence_bleu_smoothed(h, r), corpus_bleu(hs, rs), 1e-15);
}

TEST(Metrics, StatsInvariants) {
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    Sentence h(rng.uniform_index(9)), r(1 + rng.uniform_index(9));
    for (auto& t : h) t = static_cast<TokenId>(3 + rng.uniform_index(4));
    for (auto& t : r) t = static_cast<TokenId>(3 + rng.uniform_index(4));
    const auto s = bleu_stats(h, r);
    for (std::size_t n = 0; n < kBleuOrder; ++n) EXPECT_LE(s.matches[n], s.totals[n]);
    const double b = sentence_bleu_smoothed(h, r);
    EXPECT_GE(b, 0.0);
    EXPECT_LE(b, 1.0);
  }
}

TEST(Metrics, RelabelingInvariance) {
  const std::vector<TokenId> perm{0, 1, 2, 9, 5, 3, 8, 4, 7, 6};
  auto relabel = [&](const Sentence& s) {
    Sentence o;
    for (TokenId t : s) o.push_back(perm[t]);
    return o;
  };
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    Sentence h(1 + rng.uniform_index(8)), r(1 + rng.uniform_index(8));
    for (auto& t : h) t = static_cast<TokenId>(3 + rng.uniform_index(7));
    for (auto& t : r) t = static_cast<TokenId>(3 + rng.uniform_index(7));
    EXPECT_EQ(sentence_bleu_smoothed(h, r), sentence_bleu_smoothed(relabel(h), relabel(r)));
  }
}

TEST(Metrics, PermutationKeepsUnigramsOnly) {
  const auto r = ids("a b c d e f");
  const auto h = ids("a b c d e f");
  const auto p = ids("f e d c b a");
  const auto s1 = bleu_stats(h, r), s2 = bleu_stats(p, r);
  EXPECT_EQ(s1.matches[0], s2.matches[0]);
  EXPECT_NE(s1.matches[1], s2.matches[1]);
  EXPECT_GT(sentence_bleu_smoothed(h, r), sentence_bleu_smoothed(p, r));
}

TEST(Metrics, AverageLogLikelihood) {
  const auto p = testing::tiny_model(5, 2);
  std::vector<SentencePair> pairs{{{3, 4, 1}, {4, 3, 1}}, {{3, 1}, {1}}, {{4, 4, 3, 1}, {3, 3, 4, 1}}};
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& sp : pairs) {
    total += testing::reference_log_prob(p, sp.source, sp.target);
    tokens += sp.target.size();
  }
  EXPECT_NEAR(avg_log_likelihood(p, pairs, 1), total / tokens, 1e-12);
  EXPECT_NEAR(avg_log_likelihood(p, pairs, 3), avg_log_likelihood(p, pairs, 1), 0.0);
  EXPECT_THROW(avg_log_likelihood(p, std::vector<SentencePair>{}), InputError);
}

TEST(Metrics, EvalReportFormat) {
  std::ostringstream out;
  const std::vector<EvalRow> rows{{0, 1.0, -0.5, 3, 3}, {1, 0.25, -1.0 / 3.0, 2, 4}};
  write_eval_report(out, rows);
  EXPECT_EQ(out.str(),
            "sentence_id,bleu,loglik,hyp_len,ref_len\n"
            "0,1,-0.5,3,3\n"
            "1,0.25,-0.33333333333333331,2,4\n");
}

}  // namespace
}  // namespace ggd
