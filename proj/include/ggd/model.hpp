#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "ggd/autodiff.hpp"
#include "ggd/data.hpp"

namespace ggd {

struct ModelConfig {
  std::size_t source_vocab = 30;
  std::size_t target_vocab = 30;
  std::size_t embed = 32;
  std::size_t hidden = 64;
  std::size_t attention = 32;
  std::uint64_t seed = 1;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Learnable tensors in checkpoint order.
//
// GRUs use stacked gates [reset; update; candidate] with the reset gate
// applied to the recurrent projection:
//   r, u = sigmoid(W_rz x + U_rz h + b_rz)
//   c    = tanh(W_c x + r * (U_c h) + b_c)
//   h'   = h + u * (c - h)
enum class ParamId : std::size_t {
  kSourceEmbed,   // [Vs, E]
  kEncFwdW,       // [3H, E]
  kEncFwdU,       // [3H, H]
  kEncFwdB,       // [3H]
  kEncBwdW,       // [3H, E]
  kEncBwdU,       // [3H, H]
  kEncBwdB,       // [3H]
  kInitW,         // [H, 2H]  decoder init from the mean annotation
  kInitB,         // [H]
  kAttW,          // [A, H]   query projection of the previous decoder state
  kAttU,          // [A, 2H]  key projection of annotations
  kAttB,          // [A]
  kAttV,          // [A]
  kTargetEmbed,   // [Vt, E]
  kDecW,          // [3H, E + 2H]
  kDecU,          // [3H, H]
  kDecB,          // [3H]
  kOutW,          // [Vt, H + 2H] energy over [z; context]
  kOutB,          // [Vt]
  kCount
};

inline constexpr std::size_t kNumParams = static_cast<std::size_t>(ParamId::kCount);

std::string_view param_name(ParamId id);

// All learnable weights of one encoder-decoder network.
class ModelParams {
 public:
  ModelParams() = default;
  // Uniform(-0.08, 0.08) initialization from config.seed.
  explicit ModelParams(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  Tensor& operator[](ParamId id) { return tensors_[static_cast<std::size_t>(id)]; }
  const Tensor& operator[](ParamId id) const { return tensors_[static_cast<std::size_t>(id)]; }
  std::span<Tensor> tensors() { return tensors_; }
  std::span<const Tensor> tensors() const { return tensors_; }
  std::size_t num_values() const;

  // Expected shape of every tensor for config.
  static std::array<Shape, kNumParams> shapes(const ModelConfig& config);
  // Throws ContractError on inconsistent shapes or non-finite values.
  void validate() const;

  bool operator==(const ModelParams& o) const {
    return config_ == o.config_ && tensors_ == o.tensors_;
  }

 private:
  ModelConfig config_;
  std::array<Tensor, kNumParams> tensors_;
};

// Gradient buffers laid out like ModelParams.
struct ParamGrads {
  std::array<Tensor, kNumParams> tensors;

  static ParamGrads zeros_like(const ModelParams& p);
  Tensor& operator[](ParamId id) { return tensors[static_cast<std::size_t>(id)]; }
  const Tensor& operator[](ParamId id) const { return tensors[static_cast<std::size_t>(id)]; }
  void add(const ParamGrads& o, double factor = 1.0);
  void scale(double factor);
  double norm() const;
};

// ModelParams attached to a Tape as external leaves. Trainable bindings
// collect gradients; frozen ones act as constants.
class BoundParams {
 public:
  BoundParams(Tape& tape, const ModelParams& params, bool trainable);

  Tape& tape() const { return *tape_; }
  const ModelConfig& config() const { return params_->config(); }
  const ModelParams& params() const { return *params_; }
  Var operator[](ParamId id) const { return vars_[static_cast<std::size_t>(id)]; }
  // Reads parameter gradients after tape.backward(); zeros for untouched
  // tensors.
  ParamGrads grads() const;

 private:
  Tape* tape_;
  const ModelParams* params_;
  std::array<Var, kNumParams> vars_;
};

struct EncoderOutputs {
  Var annotations;  // [n, 2H]: forward state ++ backward state per position
  Var keys;         // [n, A]:  annotations projected for attention
  Var init_state;   // [H]
  std::vector<std::uint8_t> source_mask;  // over the input, PAD positions are 0
  std::size_t length = 0;                 // number of unmasked positions
};

struct DecoderState {
  Var hidden;          // z^t
  Var prev_embedding;  // embedding (or embedding mixture) fed at this step
  Var context;         // attention context used at this step
  Var attention;       // attention weights over source positions
};

// Bidirectional GRU over the non-PAD prefix of `source`.
EncoderOutputs encode(const BoundParams& params, std::span<const TokenId> source);

DecoderState initial_state(const BoundParams& params, const EncoderOutputs& enc);

// Embedding of a hard token.
Var token_embedding(const BoundParams& params, TokenId token);
// Mixture of target embedding rows weighted by a distribution over the
// target vocabulary (one-hot reduces to a single row).
Var token_embedding(const BoundParams& params, Var distribution);
// Embedding fed at the first decoder step (zeros).
Var start_embedding(const BoundParams& params);

struct StepOutput {
  DecoderState state;
  Var logits;  // [Vt]
};

// One recurrence step from `state` given the embedding of the previous
// token; returns the new state and the output energies over the target
// vocabulary.
StepOutput decoder_step(const BoundParams& params, const DecoderState& state, Var prev_embedding,
                        const EncoderOutputs& enc);

// Sum over t of log softmax(a^t)[y^t] under teacher forcing. The target may
// omit the final EOS (a capped decode); PAD after the final EOS is ignored.
Var score_tokens(const BoundParams& params, const EncoderOutputs& enc,
                 std::span<const TokenId> target);

// Relaxed version: each target token is a distribution over the target
// vocabulary, used both as the decoder input and as the selector
// dot(log softmax(a^t), y^t). Differentiable in the token vectors; every
// token passes through its own identity node, so separate scorers
// accumulate their token gradients independently.
Var score_relaxed(const BoundParams& params, const EncoderOutputs& enc,
                  std::span<const Var> target);

// log p(target | source); target must end with EOS.
double log_prob(const ModelParams& params, std::span<const TokenId> source,
                std::span<const TokenId> target);
// Per-step log probabilities of target under teacher forcing (EOS optional).
std::vector<double> step_log_probs(const ModelParams& params, std::span<const TokenId> source,
                                   std::span<const TokenId> target);

// Throws InputError for ids outside [0, vocab) or an empty sequence.
void check_tokens(std::span<const TokenId> tokens, std::size_t vocab, const char* what);

}  // namespace ggd
