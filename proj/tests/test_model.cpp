#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ggd/error.hpp"
#include "ggd/model.hpp"
#include "support/reference_model.hpp"

namespace ggd {
namespace {

using testing::tiny_model;

TEST(Model, InitIsSeededAndBounded) {
  const ModelConfig cfg = testing::tiny_config(7, 3);
  const ModelParams a(cfg), b(cfg);
  EXPECT_TRUE(a == b);
  ModelConfig other = cfg;
  other.seed = 4;
  EXPECT_FALSE(a == ModelParams(other));
  for (const auto& t : a.tensors()) {
    for (double v : t.data()) {
      EXPECT_LE(std::abs(v), 0.08);
    }
  }
  const auto shapes = ModelParams::shapes(cfg);
  EXPECT_EQ(shapes[static_cast<std::size_t>(ParamId::kOutW)], Shape({7, 18}));
  EXPECT_EQ(shapes[static_cast<std::size_t>(ParamId::kDecW)], Shape({18, 16}));
  EXPECT_NO_THROW(a.validate());
}

TEST(Model, ConfigValidation) {
  ModelConfig c = testing::tiny_config(2);
  EXPECT_THROW(c.validate(), ConfigError);
  c = testing::tiny_config(5);
  c.hidden = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Model, EncodeShapes) {
  const auto p = tiny_model(5);
  Tape tape(false);
  const BoundParams bp(tape, p, false);
  const Sentence x{3};
  const auto enc = encode(bp, x);
  EXPECT_EQ(enc.annotations.shape(), Shape({1, 12}));
  EXPECT_EQ(enc.length, 1u);
  EXPECT_EQ(enc.init_state.size(), 6u);
}

TEST(Model, EncodeMatchesReference) {
  const auto p = tiny_model(6, 2);
  const Sentence x{3, 4, 5, 1};
  Tape tape(false);
  const BoundParams bp(tape, p, false);
  const auto enc = encode(bp, x);
  const auto ref = testing::reference_encode(p, x);
  for (std::size_t j = 0; j < x.size(); ++j) {
    for (std::size_t i = 0; i < 12; ++i) {
      EXPECT_NEAR(enc.annotations.value().at(j, i), ref.annotations[j][i], 1e-13);
    }
  }
}

TEST(Model, ReversedInputSwapsDirections) {
  const auto p = tiny_model(6, 3);
  // Swapping the forward and backward weights and reversing the input
  // reverses the sequence and swaps the annotation halves.
  ModelParams q = p;
  std::swap(q[ParamId::kEncFwdW], q[ParamId::kEncBwdW]);
  std::swap(q[ParamId::kEncFwdU], q[ParamId::kEncBwdU]);
  std::swap(q[ParamId::kEncFwdB], q[ParamId::kEncBwdB]);
  const Sentence x{3, 5, 4, 4, 1};
  Sentence xr(x.rbegin(), x.rend());
  Tape tape(false);
  const BoundParams bp(tape, p, false), bq(tape, q, false);
  const auto a = encode(bp, x).annotations.value();
  const auto b = encode(bq, xr).annotations.value();
  const std::size_t n = x.size(), h = 6;
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < h; ++i) {
      EXPECT_EQ(a.at(j, i), b.at(n - 1 - j, h + i));
      EXPECT_EQ(a.at(j, h + i), b.at(n - 1 - j, i));
    }
  }
}

TEST(Model, IdenticalSentencesIdenticalAnnotations) {
  const auto p = tiny_model(6, 4);
  Tape tape(false);
  const BoundParams bp(tape, p, false);
  const Sentence x{3, 4, 1};
  EXPECT_EQ(encode(bp, x).annotations.value(), encode(bp, x).annotations.value());
}

TEST(Model, LogProbMatchesReference) {
  const auto p = tiny_model(5, 5);
  const Sentence x{3, 4, 1};
  // Every target of length <= 3 ending with EOS.
  std::vector<Sentence> targets{{1}};
  for (TokenId a = 0; a < 5; ++a) {
    if (a == kEos) continue;
    targets.push_back({a, kEos});
    for (TokenId b = 0; b < 5; ++b) {
      if (b != kEos) targets.push_back({a, b, kEos});
    }
  }
  for (const auto& y : targets) {
    const double lp = log_prob(p, x, y);
    EXPECT_NEAR(lp, testing::reference_log_prob(p, x, y), 1e-12);
    const auto steps = step_log_probs(p, x, y);
    EXPECT_NEAR(std::accumulate(steps.begin(), steps.end(), 0.0), lp, 1e-10);
  }
}

TEST(Model, StepDistributionsNormalize) {
  const auto p = tiny_model(6, 6);
  Tape tape(false);
  const BoundParams bp(tape, p, false);
  const auto enc = encode(bp, Sentence{3, 4, 5, 1});
  DecoderState state = initial_state(bp, enc);
  Var prev = state.prev_embedding;
  for (TokenId tok : {3, 5, 4, 1}) {
    const auto step = decoder_step(bp, state, prev, enc);
    double total = 0.0;
    for (double v : log_softmax(step.logits).value().data()) total += std::exp(v);
    EXPECT_NEAR(total, 1.0, 1e-10);
    double weights = 0.0;
    for (double v : step.state.attention.value().data()) weights += v;
    EXPECT_NEAR(weights, 1.0, 1e-12);
    state = step.state;
    prev = token_embedding(bp, tok);
  }
}

TEST(Model, LogProbCovariantUnderRelabeling) {
  const auto p = tiny_model(6, 7);
  const std::vector<TokenId> perm{0, 1, 2, 5, 3, 4};  // new id of each old id
  ModelParams q = p;
  for (TokenId old = 0; old < 6; ++old) {
    const TokenId nu = perm[old];
    for (std::size_t c = 0; c < q[ParamId::kTargetEmbed].cols(); ++c) {
      q[ParamId::kTargetEmbed].at(nu, c) = p[ParamId::kTargetEmbed].at(old, c);
    }
    for (std::size_t c = 0; c < q[ParamId::kOutW].cols(); ++c) {
      q[ParamId::kOutW].at(nu, c) = p[ParamId::kOutW].at(old, c);
    }
    q[ParamId::kOutB][nu] = p[ParamId::kOutB][old];
  }
  const Sentence x{3, 4, 1};
  const Sentence y{3, 5, 4, 1};
  Sentence yq;
  for (TokenId t : y) yq.push_back(perm[t]);
  EXPECT_NEAR(log_prob(p, x, y), log_prob(q, x, yq), 1e-12);
}

TEST(Model, RelaxedOneHotScoreEqualsHardScore) {
  const auto p = tiny_model(5, 8);
  const Sentence x{3, 4, 1};
  const Sentence y{4, 3, 1};
  Tape tape;
  const BoundParams bp(tape, p, false);
  const auto enc = encode(bp, x);
  std::vector<Var> soft;
  for (TokenId t : y) soft.push_back(tape.leaf(Tensor::one_hot(5, t)));
  EXPECT_NEAR(score_relaxed(bp, enc, soft).value().item(), score_tokens(bp, enc, y).value().item(),
              1e-13);
}

TEST(Model, RelaxedTokenGradientMatchesFiniteDifferences) {
  const auto p = tiny_model(5, 9);
  const Sentence x{3, 4, 2, 1};
  Rng rng(9);
  std::vector<Tensor> tokens;
  for (int t = 0; t < 3; ++t) {
    std::vector<double> w(5);
    for (double& v : w) v = rng.uniform(0.1, 1.0);
    tokens.push_back(Tensor::vector(softmax_values(w)));
  }
  auto score = [&](const std::vector<Tensor>& toks, Tape& tape, std::vector<Var>* vars) {
    const BoundParams bp(tape, p, false);
    std::vector<Var> v;
    for (const auto& t : toks) v.push_back(tape.leaf(t));
    if (vars) *vars = v;
    return score_relaxed(bp, encode(bp, x), v);
  };
  Tape tape;
  std::vector<Var> vars;
  tape.backward(score(tokens, tape, &vars));
  const double h = 1e-6;
  double worst = 0.0, scale = 0.0;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const Tensor g = tape.grad(vars[t]);
    for (std::size_t i = 0; i < 5; ++i) {
      auto plus = tokens, minus = tokens;
      plus[t][i] += h;
      minus[t][i] -= h;
      Tape tp(false), tm(false);
      const double fd =
          (score(plus, tp, nullptr).value().item() - score(minus, tm, nullptr).value().item()) /
          (2 * h);
      worst = std::max(worst, std::abs(fd - g[i]));
      scale = std::max(scale, std::abs(fd));
    }
  }
  EXPECT_LT(worst / scale, 1e-4);
}

TEST(Model, MixtureEmbedding) {
  const auto p = tiny_model(5, 10);
  Tape tape;
  const BoundParams bp(tape, p, false);
  const Var one = token_embedding(bp, tape.constant(Tensor::one_hot(5, 3)));
  EXPECT_EQ(one.value(), token_embedding(bp, TokenId{3}).value());
  const Var uni = token_embedding(bp, tape.constant(Tensor({5}, 0.2)));
  for (std::size_t c = 0; c < 4; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < 5; ++r) mean += p[ParamId::kTargetEmbed].at(r, c) / 5.0;
    EXPECT_NEAR(uni.value()[c], mean, 1e-15);
  }
  EXPECT_THROW(token_embedding(bp, tape.constant(Tensor({4}, 0.25))), ContractError);
}

TEST(Model, LogitsCoverTargetVocabulary) {
  const auto p = tiny_model(7, 11);
  Tape tape(false);
  const BoundParams bp(tape, p, false);
  const auto enc = encode(bp, Sentence{3, 1});
  const auto st = initial_state(bp, enc);
  EXPECT_EQ(decoder_step(bp, st, st.prev_embedding, enc).logits.size(), 7u);
}

TEST(Model, PaddingNeutrality) {
  const auto p = tiny_model(6, 12);
  const Sentence x{3, 4, 5, 1};
  const Sentence y{4, 4, 1};
  Sentence xp = x, yp = y;
  xp.insert(xp.end(), 3, kPad);
  yp.insert(yp.end(), 2, kPad);
  EXPECT_EQ(log_prob(p, x, y), log_prob(p, xp, yp));
  // Without a final EOS nothing is padding: a capped decode may end in PAD.
  const Sentence capped{4, kPad, kPad};
  EXPECT_EQ(step_log_probs(p, x, capped).size(), 3u);

  auto grads = [&](const Sentence& xs, const Sentence& ys) {
    Tape tape;
    const BoundParams bp(tape, p, true);
    tape.backward(score_tokens(bp, encode(bp, xs), ys));
    return bp.grads();
  };
  const auto g1 = grads(x, y), g2 = grads(xp, yp);
  for (std::size_t t = 0; t < kNumParams; ++t) {
    for (std::size_t i = 0; i < g1.tensors[t].size(); ++i) {
      EXPECT_NEAR(g1.tensors[t][i], g2.tensors[t][i], 1e-10);
    }
  }
}

TEST(Model, InputErrors) {
  const auto p = tiny_model(5, 13);
  EXPECT_THROW(log_prob(p, Sentence{3, 9, 1}, Sentence{1}), InputError);  // OOV source
  EXPECT_THROW(log_prob(p, Sentence{}, Sentence{1}), InputError);
  EXPECT_THROW(log_prob(p, Sentence{kPad, kPad}, Sentence{1}), InputError);
  EXPECT_THROW(log_prob(p, Sentence{3, 1}, Sentence{3, 4}), InputError);  // no EOS
  EXPECT_THROW(log_prob(p, Sentence{3, 1}, Sentence{7, 1}), InputError);  // OOV target
}

TEST(Model, SingleWordVocabularyHasZeroLogProb) {
  // With every output energy but EOS pushed to -inf-like values the only
  // sentence is [EOS] and its log-probability is ~0.
  auto p = tiny_model(3, 14);
  p[ParamId::kOutW].fill(0.0);
  p[ParamId::kOutB].fill(-800.0);
  p[ParamId::kOutB][kEos] = 0.0;
  EXPECT_NEAR(log_prob(p, Sentence{1}, Sentence{kEos}), 0.0, 1e-300);
}

}  // namespace
}  // namespace ggd
