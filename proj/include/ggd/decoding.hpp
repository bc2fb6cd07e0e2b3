#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "ggd/gumbel.hpp"
#include "ggd/model.hpp"

namespace ggd {

struct DecodeResult {
  // Ends with EOS unless the max-length cap was hit.
  Sentence tokens;
  std::vector<std::vector<double>> step_logits;
  // Sum of the selected per-step log-softmax values.
  double log_prob = 0.0;
  std::optional<GumbelTrajectory> trajectory;

  bool capped() const { return tokens.empty() || tokens.back() != kEos; }
};

// 2 * (number of source tokens, EOS excluded) + 5.
std::size_t default_max_len(std::span<const TokenId> source);

// Argmax word at each step (ties to the lowest id).
DecodeResult greedy_decode(const ModelParams& params, std::span<const TokenId> source,
                           std::size_t max_len);

struct SampleOptions {
  double tau = 1.0;         // temperature of the stored relaxed tokens
  bool zero_noise = false;  // testing hook: g = 0 at every step
};

// Gumbel-max sampling: fresh noise per step, y = argmax(g + a). The
// returned trajectory holds the noise and softmax((g + a) / tau).
DecodeResult sample_decode(const ModelParams& params, std::span<const TokenId> source,
                           std::size_t max_len, Rng& rng, SampleOptions opts = {});

// Keeps the `beam` best prefixes by cumulative log-probability. Prefixes
// that emit EOS stop expanding but compete in the final selection, as do
// the live prefixes once max_len is reached. Returns the best-scoring
// finished hypothesis; no length normalization.
DecodeResult beam_search(const ModelParams& params, std::span<const TokenId> source,
                         std::size_t beam, std::size_t max_len);

enum class DecodeMode { kSampling, kGreedy, kBeam };

DecodeMode parse_decode_mode(std::string_view name);
std::string_view to_string(DecodeMode m);

struct GumbelDecOptions {
  DecodeMode mode = DecodeMode::kSampling;
  double tau = 0.5;
  std::size_t beam = 5;
  std::size_t max_len = 0;  // 0: default_max_len(source)
};

// GumbelDec: sampling draws the noise directly; greedy and beam decode
// first and then infer per-step noise with the top-down construction. The
// result always carries a trajectory whose relaxed tokens use that noise.
DecodeResult gumbel_dec(const ModelParams& params, std::span<const TokenId> source, Rng& rng,
                        const GumbelDecOptions& opts);

// GumbelDec recorded on a tape for training the generator.
struct RelaxedDecode {
  Sentence tokens;
  // Straight-through token vectors: one-hot forward values, relaxed
  // backward rule; each one is also the next step's decoder input.
  std::vector<Var> soft_tokens;
  GumbelTrajectory trajectory;
};

RelaxedDecode gumbel_dec_relaxed(const BoundParams& generator, const EncoderOutputs& enc,
                                 std::span<const TokenId> source, Rng& rng,
                                 const GumbelDecOptions& opts, Estimator estimator);

// Decodes every source with per-sentence streams rng.split(i); output order
// matches input order.
std::vector<DecodeResult> decode_all(const ModelParams& params,
                                     std::span<const Sentence> sources, DecodeMode mode,
                                     std::size_t beam, const Rng& rng, std::size_t threads = 0);

}  // namespace ggd
