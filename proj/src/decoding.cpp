#include "ggd/decoding.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "ggd/error.hpp"
#include "ggd/parallel.hpp"

namespace ggd {

namespace {

void check_max_len(std::size_t max_len) {
  if (max_len < 1) throw ConfigError("max_len must be >= 1");
}

std::size_t resolve_max_len(std::size_t max_len, std::span<const TokenId> source) {
  return max_len == 0 ? default_max_len(source) : max_len;
}

// Decoder context for no-grad decoding of one sentence.
struct Session {
  Tape tape{false};
  BoundParams params;
  EncoderOutputs enc;

  Session(const ModelParams& p, std::span<const TokenId> source)
      : params(tape, p, false), enc(encode(params, source)) {}
};

}  // namespace

std::size_t default_max_len(std::span<const TokenId> source) {
  return 2 * content_tokens(source).size() + 5;
}

DecodeResult greedy_decode(const ModelParams& params, std::span<const TokenId> source,
                           std::size_t max_len) {
  check_max_len(max_len);
  Session s(params, source);
  DecodeResult r;
  DecoderState state = initial_state(s.params, s.enc);
  Var prev = state.prev_embedding;
  for (std::size_t t = 0; t < max_len; ++t) {
    auto step = decoder_step(s.params, state, prev, s.enc);
    const auto a = step.logits.value().data();
    const auto tok = static_cast<TokenId>(argmax(a));
    r.log_prob += log_softmax_values(a)[tok];
    r.step_logits.emplace_back(a.begin(), a.end());
    r.tokens.push_back(tok);
    if (tok == kEos) break;
    state = step.state;
    prev = token_embedding(s.params, tok);
  }
  return r;
}

DecodeResult sample_decode(const ModelParams& params, std::span<const TokenId> source,
                           std::size_t max_len, Rng& rng, SampleOptions opts) {
  check_max_len(max_len);
  check_temperature(opts.tau);
  Session s(params, source);
  DecodeResult r;
  r.trajectory.emplace();
  const std::size_t k = params.config().target_vocab;
  DecoderState state = initial_state(s.params, s.enc);
  Var prev = state.prev_embedding;
  for (std::size_t t = 0; t < max_len; ++t) {
    auto step = decoder_step(s.params, state, prev, s.enc);
    const auto a = step.logits.value().data();
    GumbelNoise noise = opts.zero_noise ? GumbelNoise{std::vector<double>(k, 0.0)}
                                        : draw_gumbel_noise(k, rng);
    const HardToken hard = gumbel_max(a, noise.g);
    const auto tok = static_cast<TokenId>(hard.index);
    r.log_prob += log_softmax_values(a)[tok];
    r.step_logits.emplace_back(a.begin(), a.end());
    r.trajectory->steps.push_back(
        {hard, gumbel_softmax(a, noise.g, opts.tau), std::move(noise), r.step_logits.back()});
    r.tokens.push_back(tok);
    if (tok == kEos) break;
    state = step.state;
    prev = token_embedding(s.params, tok);
  }
  return r;
}

DecodeResult beam_search(const ModelParams& params, std::span<const TokenId> source,
                         std::size_t beam, std::size_t max_len) {
  if (beam < 1) throw ConfigError("beam width must be >= 1");
  check_max_len(max_len);
  Session s(params, source);

  struct Hyp {
    Sentence tokens;
    std::vector<std::vector<double>> logits;
    double score = 0.0;
    DecoderState state;
    Var prev;
  };
  struct Candidate {
    double score;
    std::size_t hyp;
    TokenId token;
  };

  std::vector<Hyp> live(1);
  live[0].state = initial_state(s.params, s.enc);
  live[0].prev = live[0].state.prev_embedding;
  std::vector<Hyp> finished;

  for (std::size_t t = 0; t < max_len && !live.empty(); ++t) {
    std::vector<StepOutput> steps;
    std::vector<std::vector<double>> log_probs;
    std::vector<Candidate> cands;
    for (std::size_t h = 0; h < live.size(); ++h) {
      steps.push_back(decoder_step(s.params, live[h].state, live[h].prev, s.enc));
      log_probs.push_back(log_softmax_values(steps.back().logits.value().data()));
      for (std::size_t k = 0; k < log_probs.back().size(); ++k) {
        cands.push_back({live[h].score + log_probs.back()[k], h, static_cast<TokenId>(k)});
      }
    }
    // Candidates were generated in (hypothesis, token) order; a stable sort
    // keeps that order among equal scores.
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& x, const Candidate& y) { return x.score > y.score; });
    cands.resize(std::min(cands.size(), beam));

    std::vector<Hyp> next;
    for (const auto& c : cands) {
      const Hyp& parent = live[c.hyp];
      Hyp h;
      h.tokens = parent.tokens;
      h.tokens.push_back(c.token);
      h.logits = parent.logits;
      const auto a = steps[c.hyp].logits.value().data();
      h.logits.emplace_back(a.begin(), a.end());
      h.score = c.score;
      if (c.token == kEos) {
        finished.push_back(std::move(h));
      } else {
        h.state = steps[c.hyp].state;
        h.prev = token_embedding(s.params, c.token);
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);

    // Scores never increase along a prefix, so once the best finished
    // hypothesis is at least as good as every live one, the result is fixed.
    if (!finished.empty() && !live.empty()) {
      double best_finished = -std::numeric_limits<double>::infinity();
      for (const auto& f : finished) best_finished = std::max(best_finished, f.score);
      double best_live = -std::numeric_limits<double>::infinity();
      for (const auto& l : live) best_live = std::max(best_live, l.score);
      if (best_finished >= best_live) live.clear();
    }
  }
  for (auto& h : live) finished.push_back(std::move(h));

  std::size_t best = 0;
  for (std::size_t i = 1; i < finished.size(); ++i) {
    if (finished[i].score > finished[best].score) best = i;
  }
  DecodeResult r;
  r.tokens = std::move(finished[best].tokens);
  r.step_logits = std::move(finished[best].logits);
  r.log_prob = finished[best].score;
  return r;
}

DecodeMode parse_decode_mode(std::string_view name) {
  if (name == "sampling" || name == "sample") return DecodeMode::kSampling;
  if (name == "greedy") return DecodeMode::kGreedy;
  if (name == "beam") return DecodeMode::kBeam;
  throw ConfigError("unknown decode mode '" + std::string(name) +
                    "' (expected sampling, greedy or beam)");
}

std::string_view to_string(DecodeMode m) {
  switch (m) {
    case DecodeMode::kSampling:
      return "sampling";
    case DecodeMode::kGreedy:
      return "greedy";
    case DecodeMode::kBeam:
      return "beam";
  }
  return "?";
}

DecodeResult gumbel_dec(const ModelParams& params, std::span<const TokenId> source, Rng& rng,
                        const GumbelDecOptions& opts) {
  check_temperature(opts.tau);
  const std::size_t max_len = resolve_max_len(opts.max_len, source);
  if (opts.mode == DecodeMode::kSampling) {
    return sample_decode(params, source, max_len, rng, {opts.tau, false});
  }
  DecodeResult r = opts.mode == DecodeMode::kGreedy
                       ? greedy_decode(params, source, max_len)
                       : beam_search(params, source, opts.beam, max_len);
  r.trajectory.emplace();
  for (std::size_t t = 0; t < r.tokens.size(); ++t) {
    const auto& a = r.step_logits[t];
    GumbelNoise noise = infer_noise(r.tokens[t], a, rng);
    SoftToken soft = gumbel_softmax(a, noise.g, opts.tau);
    r.trajectory->steps.push_back({{r.tokens[t], a.size()}, std::move(soft), std::move(noise), a});
  }
  return r;
}

RelaxedDecode gumbel_dec_relaxed(const BoundParams& gen, const EncoderOutputs& enc,
                                 std::span<const TokenId> source, Rng& rng,
                                 const GumbelDecOptions& opts, Estimator estimator) {
  check_temperature(opts.tau);
  const std::size_t max_len = resolve_max_len(opts.max_len, source);
  check_max_len(max_len);

  // Deterministic generators fix the word sequence up front; the tape then
  // replays it with inferred noise.
  std::optional<Sentence> fixed;
  if (opts.mode == DecodeMode::kGreedy) {
    fixed = greedy_decode(gen.params(), source, max_len).tokens;
  } else if (opts.mode == DecodeMode::kBeam) {
    fixed = beam_search(gen.params(), source, opts.beam, max_len).tokens;
  }

  const std::size_t k = gen.config().target_vocab;
  RelaxedDecode out;
  DecoderState state = initial_state(gen, enc);
  Var prev = state.prev_embedding;
  for (std::size_t t = 0; t < max_len; ++t) {
    if (fixed && t >= fixed->size()) break;
    auto step = decoder_step(gen, state, prev, enc);
    const auto a = step.logits.value().data();
    GumbelNoise noise = fixed ? infer_noise((*fixed)[t], a, rng) : draw_gumbel_noise(k, rng);
    const HardToken hard = gumbel_max(a, noise.g);
    if (fixed && hard.index != (*fixed)[t]) {
      throw ContractError("inferred noise does not reproduce the decoded word");
    }
    const std::span<const double> backward_noise =
        estimator == Estimator::kStGumbel ? std::span<const double>(noise.g)
                                          : std::span<const double>();
    const Var token = straight_through(step.logits, hard.index, backward_noise, opts.tau);
    out.trajectory.steps.push_back({hard, gumbel_softmax(a, noise.g, opts.tau), std::move(noise),
                                    std::vector<double>(a.begin(), a.end())});
    out.soft_tokens.push_back(token);
    out.tokens.push_back(static_cast<TokenId>(hard.index));
    if (hard.index == kEos) break;
    state = step.state;
    prev = token_embedding(gen, token);
  }
  return out;
}

std::vector<DecodeResult> decode_all(const ModelParams& params,
                                     std::span<const Sentence> sources, DecodeMode mode,
                                     std::size_t beam, const Rng& rng, std::size_t threads) {
  std::vector<DecodeResult> out(sources.size());
  parallel_for(sources.size(), threads, [&](std::size_t i) {
    const std::size_t max_len = default_max_len(sources[i]);
    switch (mode) {
      case DecodeMode::kGreedy:
        out[i] = greedy_decode(params, sources[i], max_len);
        break;
      case DecodeMode::kBeam:
        out[i] = beam_search(params, sources[i], beam, max_len);
        break;
      case DecodeMode::kSampling: {
        Rng local = rng.split(static_cast<std::uint64_t>(i));
        out[i] = sample_decode(params, sources[i], max_len, local);
        break;
      }
    }
  });
  return out;
}

}  // namespace ggd
