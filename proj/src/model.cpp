#include "ggd/model.hpp"

#include <cmath>
#include <string>

#include "ggd/error.hpp"

namespace ggd {

namespace {

constexpr std::array<std::string_view, kNumParams> kParamNames = {
    "source_embed", "enc_fwd_w", "enc_fwd_u", "enc_fwd_b", "enc_bwd_w", "enc_bwd_u", "enc_bwd_b",
    "init_w",       "init_b",    "att_w",     "att_u",     "att_b",     "att_v",     "target_embed",
    "dec_w",        "dec_u",     "dec_b",     "out_w",     "out_b"};

constexpr double kInitScale = 0.08;

Var gru_step(Var wx, Var u, Var h, std::size_t hidden) {
  const Var uh = matmul(u, h);
  const Var rz = sigmoid(slice(wx, 0, 2 * hidden) + slice(uh, 0, 2 * hidden));
  const Var reset = slice(rz, 0, hidden);
  const Var update = slice(rz, hidden, hidden);
  const Var cand = tanh(slice(wx, 2 * hidden, hidden) + reset * slice(uh, 2 * hidden, hidden));
  return h + update * (cand - h);
}

// Padding only ever follows EOS; a PAD word inside a capped decode is a
// real (if unlikely) output and is kept.
std::span<const TokenId> strip_padding(std::span<const TokenId> s) {
  std::size_t n = s.size();
  while (n > 0 && s[n - 1] == kPad) --n;
  return n > 0 && s[n - 1] == kEos ? s.first(n) : s;
}

}  // namespace

std::string_view param_name(ParamId id) { return kParamNames[static_cast<std::size_t>(id)]; }

void ModelConfig::validate() const {
  if (source_vocab < kNumReserved || target_vocab < kNumReserved) {
    throw ConfigError("vocabularies must include the 3 reserved tokens");
  }
  if (embed == 0 || hidden == 0 || attention == 0) {
    throw ConfigError("model dimensions must be positive");
  }
}

std::array<Shape, kNumParams> ModelParams::shapes(const ModelConfig& c) {
  const std::size_t e = c.embed, h = c.hidden, a = c.attention;
  return {Shape::matrix(c.source_vocab, e),
          Shape::matrix(3 * h, e),
          Shape::matrix(3 * h, h),
          Shape::vector(3 * h),
          Shape::matrix(3 * h, e),
          Shape::matrix(3 * h, h),
          Shape::vector(3 * h),
          Shape::matrix(h, 2 * h),
          Shape::vector(h),
          Shape::matrix(a, h),
          Shape::matrix(a, 2 * h),
          Shape::vector(a),
          Shape::vector(a),
          Shape::matrix(c.target_vocab, e),
          Shape::matrix(3 * h, e + 2 * h),
          Shape::matrix(3 * h, h),
          Shape::vector(3 * h),
          Shape::matrix(c.target_vocab, 3 * h),
          Shape::vector(c.target_vocab)};
}

ModelParams::ModelParams(const ModelConfig& config) : config_(config) {
  config.validate();
  Rng rng = Rng(config.seed).split("model/init");
  const auto sh = shapes(config);
  for (std::size_t i = 0; i < kNumParams; ++i) {
    tensors_[i] = Tensor(sh[i]);
    for (double& v : tensors_[i].data()) v = rng.uniform(-kInitScale, kInitScale);
  }
}

std::size_t ModelParams::num_values() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

void ModelParams::validate() const {
  config_.validate();
  const auto sh = shapes(config_);
  for (std::size_t i = 0; i < kNumParams; ++i) {
    if (tensors_[i].shape() != sh[i]) {
      throw ContractError("parameter " + std::string(kParamNames[i]) + " has shape " +
                          tensors_[i].shape().str() + ", expected " + sh[i].str());
    }
    if (!tensors_[i].all_finite()) {
      throw ContractError("parameter " + std::string(kParamNames[i]) + " is not finite");
    }
  }
}

// ---------------------------------------------------------------------------
// ParamGrads

ParamGrads ParamGrads::zeros_like(const ModelParams& p) {
  ParamGrads g;
  for (std::size_t i = 0; i < kNumParams; ++i) g.tensors[i] = Tensor(p.tensors()[i].shape());
  return g;
}

void ParamGrads::add(const ParamGrads& o, double factor) {
  for (std::size_t i = 0; i < kNumParams; ++i) {
    auto dst = tensors[i].data();
    const auto src = o.tensors[i].data();
    if (dst.size() != src.size()) throw ContractError("ParamGrads::add: shape mismatch");
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += factor * src[j];
  }
}

void ParamGrads::scale(double factor) {
  for (auto& t : tensors) {
    for (double& v : t.data()) v *= factor;
  }
}

double ParamGrads::norm() const {
  double s = 0.0;
  for (const auto& t : tensors) {
    for (const double v : t.data()) s += v * v;
  }
  return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// Binding

BoundParams::BoundParams(Tape& tape, const ModelParams& params, bool trainable)
    : tape_(&tape), params_(&params) {
  for (std::size_t i = 0; i < kNumParams; ++i) {
    vars_[i] = tape.external(params.tensors()[i], trainable);
  }
}

ParamGrads BoundParams::grads() const {
  ParamGrads g;
  for (std::size_t i = 0; i < kNumParams; ++i) g.tensors[i] = tape_->grad(vars_[i]);
  return g;
}

void check_tokens(std::span<const TokenId> tokens, std::size_t vocab, const char* what) {
  if (tokens.empty()) throw InputError(std::string(what) + ": empty sequence");
  for (const TokenId t : tokens) {
    if (t >= vocab) {
      throw InputError(std::string(what) + ": token id " + std::to_string(t) +
                       " outside vocabulary of size " + std::to_string(vocab));
    }
  }
}

// ---------------------------------------------------------------------------
// Encoder

EncoderOutputs encode(const BoundParams& p, std::span<const TokenId> source) {
  const auto& cfg = p.config();
  const std::size_t h = cfg.hidden;
  Tape& tape = p.tape();

  EncoderOutputs enc;
  enc.source_mask.resize(source.size());
  std::vector<TokenId> tokens;
  for (std::size_t i = 0; i < source.size(); ++i) {
    enc.source_mask[i] = source[i] != kPad;
    if (enc.source_mask[i]) tokens.push_back(source[i]);
  }
  check_tokens(tokens, cfg.source_vocab, "encode");
  const std::size_t n = tokens.size();
  enc.length = n;

  std::vector<Var> emb(n);
  for (std::size_t j = 0; j < n; ++j) emb[j] = row(p[ParamId::kSourceEmbed], tokens[j]);

  const Var zero = tape.constant(Tensor(Shape::vector(h)));
  std::vector<Var> fwd(n), bwd(n);
  Var state = zero;
  for (std::size_t j = 0; j < n; ++j) {
    const Var wx = matmul(p[ParamId::kEncFwdW], emb[j]) + p[ParamId::kEncFwdB];
    state = gru_step(wx, p[ParamId::kEncFwdU], state, h);
    fwd[j] = state;
  }
  state = zero;
  for (std::size_t j = n; j-- > 0;) {
    const Var wx = matmul(p[ParamId::kEncBwdW], emb[j]) + p[ParamId::kEncBwdB];
    state = gru_step(wx, p[ParamId::kEncBwdU], state, h);
    bwd[j] = state;
  }

  std::vector<Var> ann(n);
  for (std::size_t j = 0; j < n; ++j) ann[j] = concat({fwd[j], bwd[j]});
  enc.annotations = stack_rows(ann);
  enc.keys = matmul(enc.annotations, transpose(p[ParamId::kAttU]));

  const Var mean_weights =
      tape.constant(Tensor(Shape::vector(n), 1.0 / static_cast<double>(n)));
  const Var mean = vecmat(mean_weights, enc.annotations);
  enc.init_state = tanh(matmul(p[ParamId::kInitW], mean) + p[ParamId::kInitB]);
  return enc;
}

// ---------------------------------------------------------------------------
// Decoder

DecoderState initial_state(const BoundParams& p, const EncoderOutputs& enc) {
  DecoderState s;
  s.hidden = enc.init_state;
  s.prev_embedding = start_embedding(p);
  return s;
}

Var token_embedding(const BoundParams& p, TokenId token) {
  if (token >= p.config().target_vocab) {
    throw InputError("target token id " + std::to_string(token) + " outside vocabulary");
  }
  return row(p[ParamId::kTargetEmbed], token);
}

Var token_embedding(const BoundParams& p, Var distribution) {
  if (distribution.value().rank() != 1 || distribution.size() != p.config().target_vocab) {
    throw ContractError("token distribution must be a vector over the target vocabulary");
  }
  return vecmat(distribution, p[ParamId::kTargetEmbed]);
}

Var start_embedding(const BoundParams& p) {
  return p.tape().constant(Tensor(Shape::vector(p.config().embed)));
}

StepOutput decoder_step(const BoundParams& p, const DecoderState& state, Var prev_embedding,
                        const EncoderOutputs& enc) {
  const auto& cfg = p.config();
  if (prev_embedding.value().rank() != 1 || prev_embedding.size() != cfg.embed) {
    throw ContractError("decoder_step: previous-token embedding has wrong size");
  }
  if (state.hidden.size() != cfg.hidden) throw ContractError("decoder_step: hidden size mismatch");

  const Var query = matmul(p[ParamId::kAttW], state.hidden) + p[ParamId::kAttB];
  const Var energies = matmul(tanh(add_rows(enc.keys, query)), p[ParamId::kAttV]);
  const Var weights = softmax(energies);
  const Var context = vecmat(weights, enc.annotations);

  const Var wx = matmul(p[ParamId::kDecW], concat({prev_embedding, context})) + p[ParamId::kDecB];
  const Var hidden = gru_step(wx, p[ParamId::kDecU], state.hidden, cfg.hidden);
  const Var logits = matmul(p[ParamId::kOutW], concat({hidden, context})) + p[ParamId::kOutB];

  StepOutput out;
  out.state.hidden = hidden;
  out.state.prev_embedding = prev_embedding;
  out.state.context = context;
  out.state.attention = weights;
  out.logits = logits;
  return out;
}

Var score_tokens(const BoundParams& p, const EncoderOutputs& enc,
                 std::span<const TokenId> target) {
  const auto y = strip_padding(target);
  check_tokens(y, p.config().target_vocab, "score_tokens");
  DecoderState state = initial_state(p, enc);
  Var prev = state.prev_embedding;
  Var total;
  for (const TokenId tok : y) {
    auto step = decoder_step(p, state, prev, enc);
    const Var term = pick(log_softmax(step.logits), tok);
    total = total.valid() ? total + term : term;
    state = step.state;
    prev = token_embedding(p, tok);
  }
  return total;
}

Var score_relaxed(const BoundParams& p, const EncoderOutputs& enc, std::span<const Var> target) {
  if (target.empty()) throw InputError("score_relaxed: empty sequence");
  DecoderState state = initial_state(p, enc);
  Var prev = state.prev_embedding;
  Var total;
  for (const Var& tok : target) {
    if (tok.tape() != &p.tape()) throw ContractError("score_relaxed: token on another tape");
    const Var proxy = identity(tok);
    auto step = decoder_step(p, state, prev, enc);
    const Var term = dot(log_softmax(step.logits), proxy);
    total = total.valid() ? total + term : term;
    state = step.state;
    prev = token_embedding(p, proxy);
  }
  return total;
}

std::vector<double> step_log_probs(const ModelParams& params, std::span<const TokenId> source,
                                   std::span<const TokenId> target) {
  const auto y = strip_padding(target);
  check_tokens(y, params.config().target_vocab, "step_log_probs");
  Tape tape(false);
  const BoundParams p(tape, params, false);
  const auto enc = encode(p, source);
  DecoderState state = initial_state(p, enc);
  Var prev = state.prev_embedding;
  std::vector<double> out;
  out.reserve(y.size());
  for (const TokenId tok : y) {
    auto step = decoder_step(p, state, prev, enc);
    out.push_back(log_softmax_values(step.logits.value().data())[tok]);
    state = step.state;
    prev = token_embedding(p, tok);
  }
  return out;
}

double log_prob(const ModelParams& params, std::span<const TokenId> source,
                std::span<const TokenId> target) {
  const auto y = strip_padding(target);
  if (y.empty() || y.back() != kEos) throw InputError("log_prob: target must end with EOS");
  Tape tape(false);
  const BoundParams p(tape, params, false);
  const auto enc = encode(p, source);
  return score_tokens(p, enc, y).value().item();
}

}  // namespace ggd
