#include "ggd/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "ggd/error.hpp"
#include "ggd/metrics.hpp"
#include "ggd/parallel.hpp"

namespace ggd {

namespace {

// Sums per-sentence gradients in sentence order.
// Empty slots are sentences that contribute exactly zero.
ParamGrads reduce(const ModelParams& like, std::span<const std::optional<ParamGrads>> parts,
                  double factor) {
  ParamGrads total = ParamGrads::zeros_like(like);
  for (const auto& g : parts) {
    if (g) total.add(*g, factor);
  }
  return total;
}

std::size_t count_tokens(std::span<const TokenId> s) {
  return static_cast<std::size_t>(
      std::count_if(s.begin(), s.end(), [](TokenId t) { return t != kPad; }));
}

std::vector<Sentence> unpadded_sources(const Batch& batch) {
  std::vector<Sentence> out;
  out.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) out.push_back(batch.unpadded(i).source);
  return out;
}

// One hard generation from the generator in the given mode.
Sentence generate(const ModelParams& phi, std::span<const TokenId> source,
                  const GumbelDecOptions& d, Rng& rng) {
  const std::size_t max_len = d.max_len ? d.max_len : default_max_len(source);
  switch (d.mode) {
    case DecodeMode::kGreedy:
      return greedy_decode(phi, source, max_len).tokens;
    case DecodeMode::kBeam:
      return beam_search(phi, source, d.beam, max_len).tokens;
    case DecodeMode::kSampling:
      break;
  }
  return sample_decode(phi, source, max_len, rng, {d.tau, false}).tokens;
}

void check_batch(std::size_t n, const char* what) {
  if (n == 0) throw InputError(std::string(what) + ": empty batch");
}

std::size_t update_limit(const TrainConfig& cfg, std::size_t batches_per_epoch) {
  std::size_t limit = std::numeric_limits<std::size_t>::max();
  if (cfg.max_updates) limit = cfg.max_updates;
  if (cfg.max_epochs) limit = std::min(limit, cfg.max_epochs * batches_per_epoch);
  return limit;
}

Corpus eval_subset(const Corpus& valid, std::size_t limit) {
  Corpus c;
  c.split = valid.split;
  const std::size_t n = limit ? std::min(limit, valid.size()) : valid.size();
  c.pairs.assign(valid.pairs.begin(), valid.pairs.begin() + static_cast<std::ptrdiff_t>(n));
  return c;
}

// Tracks the best periodic evaluation and the patience counter.
struct Patience {
  std::size_t limit;
  double best = -1.0;
  std::size_t bad = 0;

  // Returns true once `limit` evaluations in a row failed to improve.
  bool observe(double bleu) {
    if (bleu > best) {
      best = bleu;
      bad = 0;
    } else {
      ++bad;
    }
    return limit > 0 && bad >= limit;
  }
};

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<std::string> TrainConfig::validate() const {
  optimizer.validate();
  disc_optimizer.validate();
  if (n_g == 0) throw ConfigError("n_g must be > 0");
  check_temperature(tau);
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (beam == 0) throw ConfigError("beam must be >= 1");
  if (eval_every == 0) throw ConfigError("eval_every must be >= 1");
  if (max_epochs == 0 && max_updates == 0) {
    throw ConfigError("set max_epochs or max_updates");
  }
  if (!(baseline_decay > 0.0 && baseline_decay < 1.0)) {
    throw ConfigError("baseline_decay must be in (0, 1)");
  }
  std::vector<std::string> warnings;
  if (tau < kTemperatureWarnFloor) {
    warnings.push_back("tau = " + format_number(tau) +
                       " is below 0.01; relaxed gradients nearly vanish");
  }
  if (generator_mode == DecodeMode::kBeam) {
    warnings.push_back("beam-mode generators are experimental");
  }
  return warnings;
}

RewardBaseline::RewardBaseline(double decay, double initial) : decay_(decay), value_(initial) {
  if (!(decay > 0.0 && decay < 1.0)) throw ConfigError("baseline decay must be in (0, 1)");
  if (!std::isfinite(initial)) throw ConfigError("baseline must be finite");
}

void RewardBaseline::update(double reward) {
  if (!std::isfinite(reward)) throw NumericError("non-finite reward");
  value_ = initialized_ ? decay_ * value_ + (1.0 - decay_) * reward : reward;
  initialized_ = true;
}

void RewardBaseline::reset(double value) {
  if (!std::isfinite(value)) throw ConfigError("baseline must be finite");
  value_ = value;
  initialized_ = true;
}

// ---------------------------------------------------------------------------

ValueAndGrads log_prob_gradient(const ModelParams& params, std::span<const TokenId> source,
                                std::span<const TokenId> target) {
  Tape tape;
  const BoundParams p(tape, params, true);
  const auto enc = encode(p, source);
  const Var s = score_tokens(p, enc, target);
  tape.backward(s);
  return {s.value().item(), p.grads()};
}

ValueAndGrads teacher_forcing_gradient(const ModelParams& params, const Batch& batch,
                                       std::size_t threads) {
  check_batch(batch.size(), "teacher_forcing");
  std::vector<std::optional<ParamGrads>> grads(batch.size());
  std::vector<double> lp(batch.size());
  std::vector<std::size_t> tokens(batch.size());
  parallel_for(batch.size(), threads, [&](std::size_t i) {
    const auto pair = batch.unpadded(i);
    auto r = log_prob_gradient(params, pair.source, pair.target);
    lp[i] = r.value;
    grads[i] = std::move(r.grads);
    tokens[i] = count_tokens(pair.target);
  });
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    total += lp[i];
    n += tokens[i];
  }
  const double inv = 1.0 / static_cast<double>(n);
  return {-total * inv, reduce(params, grads, -inv)};
}

double teacher_forcing_step(const Batch& batch, ModelParams& params, Optimizer& opt,
                            std::size_t threads) {
  auto r = teacher_forcing_gradient(params, batch, threads);
  opt.step(params, r.grads);
  return r.value;
}

ReinforceGradient reinforce_gradient(const ModelParams& params, const Batch& batch,
                                     double baseline, const Rng& rng, std::size_t threads) {
  check_batch(batch.size(), "reinforce");
  const std::size_t n = batch.size();
  std::vector<std::optional<ParamGrads>> grads(n);
  ReinforceGradient out;
  out.samples.resize(n);
  parallel_for(n, threads, [&](std::size_t i) {
    const auto pair = batch.unpadded(i);
    Rng local = rng.split(static_cast<std::uint64_t>(i));
    auto& s = out.samples[i];
    s.sample = sample_decode(params, pair.source, default_max_len(pair.source), local).tokens;
    s.reward = sentence_bleu_smoothed(s.sample, pair.target);
    const double weight = s.reward - baseline;
    if (weight == 0.0) return;  // centered weight is zero: no contribution
    auto g = log_prob_gradient(params, pair.source, s.sample).grads;
    g.scale(weight);
    grads[i] = std::move(g);
  });
  double total = 0.0;
  for (const auto& s : out.samples) total += s.reward;
  out.mean_reward = total / static_cast<double>(n);
  out.grads = reduce(params, grads, -1.0 / static_cast<double>(n));
  return out;
}

double reinforce_step(const Batch& batch, ModelParams& params, Optimizer& opt,
                      RewardBaseline& baseline, const Rng& rng, std::size_t threads) {
  auto r = reinforce_gradient(params, batch, baseline.value(), rng, threads);
  opt.step(params, r.grads);
  baseline.update(r.mean_reward);
  return r.mean_reward;
}

// ---------------------------------------------------------------------------

GeneratorStep ggd_generator_gradient(std::span<const Sentence> sources, const ModelParams& phi,
                                     const ModelParams& theta, const GeneratorOptions& opts,
                                     const Rng& rng, std::size_t threads) {
  check_batch(sources.size(), "ggd_generator");
  const std::size_t n = sources.size();
  // phi' for this step: no gradient ever reaches it.
  const ModelParams phi_frozen = phi;
  std::vector<std::optional<ParamGrads>> grads(n);
  std::vector<double> objective(n), score(n);
  GeneratorStep out;
  out.generations.resize(n);
  parallel_for(n, threads, [&](std::size_t i) {
    Rng local = rng.split(static_cast<std::uint64_t>(i));
    Tape tape;
    const BoundParams gen(tape, phi, true);
    const auto enc = encode(gen, sources[i]);
    auto dec = gumbel_dec_relaxed(gen, enc, sources[i], local, opts.decode, opts.estimator);

    const BoundParams disc(tape, theta, false);
    Var r = score_relaxed(disc, encode(disc, sources[i]), dec.soft_tokens);
    score[i] = r.value().item();
    if (opts.entropy_reg) {
      const BoundParams frozen(tape, phi_frozen, false);
      r = r - score_relaxed(frozen, encode(frozen, sources[i]), dec.soft_tokens);
    }
    objective[i] = r.value().item();
    tape.backward(r);
    grads[i] = gen.grads();
    out.generations[i] = std::move(dec.tokens);
  });
  for (std::size_t i = 0; i < n; ++i) {
    out.objective += objective[i];
    out.disc_score_gen += score[i];
  }
  out.objective /= static_cast<double>(n);
  out.disc_score_gen /= static_cast<double>(n);
  out.grads = reduce(phi, grads, -1.0 / static_cast<double>(n));
  return out;
}

GeneratorStep ggd_generator_step(std::span<const Sentence> sources, ModelParams& phi,
                                 const ModelParams& theta, Optimizer& opt,
                                 const GeneratorOptions& opts, const Rng& rng,
                                 std::size_t threads) {
  auto r = ggd_generator_gradient(sources, phi, theta, opts, rng, threads);
  opt.step(phi, r.grads);
  return r;
}

RelaxedObjective ggd_relaxed_objective(std::span<const TokenId> source, const ModelParams& phi,
                                       const ModelParams& phi_frozen, const ModelParams& theta,
                                       const GumbelTrajectory& replay, double tau,
                                       bool entropy_reg) {
  check_temperature(tau);
  if (replay.steps.empty()) throw InputError("ggd_relaxed_objective: empty trajectory");
  Tape tape;
  const BoundParams gen(tape, phi, true);
  const auto enc = encode(gen, source);
  DecoderState state = initial_state(gen, enc);
  Var prev = state.prev_embedding;
  std::vector<Var> tokens;
  for (const auto& step : replay.steps) {
    auto out = decoder_step(gen, state, prev, enc);
    const Var tok = gumbel_softmax(out.logits, step.noise.g, tau);
    tokens.push_back(tok);
    state = out.state;
    prev = token_embedding(gen, tok);
  }
  const BoundParams disc(tape, theta, false);
  Var r = score_relaxed(disc, encode(disc, source), tokens);
  if (entropy_reg) {
    const BoundParams frozen(tape, phi_frozen, false);
    r = r - score_relaxed(frozen, encode(frozen, source), tokens);
  }
  tape.backward(r);
  return {r.value().item(), gen.grads()};
}

DiscriminatorStep ggd_discriminator_gradient(const Batch& batch, const ModelParams& phi,
                                             const ModelParams& theta,
                                             const GumbelDecOptions& gen_decode, const Rng& rng,
                                             std::size_t threads) {
  check_batch(batch.size(), "ggd_discriminator");
  const std::size_t n = batch.size();
  std::vector<std::optional<ParamGrads>> grads(n);
  std::vector<double> real(n), gen(n);
  DiscriminatorStep out;
  out.generations.resize(n);
  parallel_for(n, threads, [&](std::size_t i) {
    const auto pair = batch.unpadded(i);
    Rng local = rng.split(static_cast<std::uint64_t>(i));
    Sentence y = generate(phi, pair.source, gen_decode, local);
    Tape tape;
    const BoundParams disc(tape, theta, true);
    const auto enc = encode(disc, pair.source);
    const Var s_real = score_tokens(disc, enc, pair.target);
    real[i] = s_real.value().item();
    if (y == pair.target) {
      // The two terms cancel: zero objective and zero gradient.
      gen[i] = real[i];
    } else {
      const Var s_gen = score_tokens(disc, enc, y);
      gen[i] = s_gen.value().item();
      tape.backward(s_real - s_gen);
      grads[i] = disc.grads();
    }
    out.generations[i] = std::move(y);
  });
  for (std::size_t i = 0; i < n; ++i) {
    out.disc_score_real += real[i];
    out.disc_score_gen += gen[i];
  }
  out.disc_score_real /= static_cast<double>(n);
  out.disc_score_gen /= static_cast<double>(n);
  out.objective = out.disc_score_real - out.disc_score_gen;
  out.grads = reduce(theta, grads, -1.0 / static_cast<double>(n));
  return out;
}

DiscriminatorStep ggd_discriminator_step(const Batch& batch, const ModelParams& phi,
                                         ModelParams& theta, Optimizer& opt,
                                         const GumbelDecOptions& gen_decode, const Rng& rng,
                                         std::size_t threads) {
  auto r = ggd_discriminator_gradient(batch, phi, theta, gen_decode, rng, threads);
  opt.step(theta, r.grads);
  return r;
}

// ---------------------------------------------------------------------------

MetricsLog::MetricsLog(std::ostream* out) : out_(out) {
  if (out_) *out_ << header() << '\n' << std::flush;
}

std::string MetricsLog::header() {
  return "update,phase,objective,greedy_bleu,disc_score_real,disc_score_gen,tau,seed";
}

std::string MetricsLog::format(const MetricsRow& row) {
  auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string(); };
  return std::to_string(row.update) + ',' + row.phase + ',' + opt(row.objective) + ',' +
         opt(row.greedy_bleu) + ',' + opt(row.disc_score_real) + ',' + opt(row.disc_score_gen) +
         ',' + format_number(row.tau) + ',' + std::to_string(row.seed);
}

void MetricsLog::append(const MetricsRow& row) {
  rows_.push_back(row);
  if (out_) *out_ << format(row) << '\n' << std::flush;
}

// ---------------------------------------------------------------------------

double greedy_bleu(const ModelParams& params, const Corpus& corpus, std::size_t limit,
                   std::size_t threads) {
  const std::size_t n = limit ? std::min(limit, corpus.size()) : corpus.size();
  if (n == 0) throw InputError("greedy_bleu: empty corpus");
  std::vector<Sentence> sources(n), refs(n);
  for (std::size_t i = 0; i < n; ++i) {
    sources[i] = corpus.pairs[i].source;
    refs[i] = corpus.pairs[i].target;
  }
  const auto out = decode_all(params, sources, DecodeMode::kGreedy, 1, Rng(0), threads);
  std::vector<Sentence> hyps(n);
  for (std::size_t i = 0; i < n; ++i) hyps[i] = out[i].tokens;
  return corpus_bleu(hyps, refs);
}

namespace {

// Shared driver for the single-network loops.
template <typename StepFn>
TrainResult run_single(const Corpus& train, const Corpus& valid, ModelParams params,
                       const TrainConfig& cfg, MetricsLog& log, const char* label,
                       StepFn&& step_fn) {
  cfg.validate();
  Optimizer opt(cfg.optimizer);
  const Rng root(cfg.seed);
  BatchIterator batches(train, cfg.batch_size, root.split(std::string(label) + "/shuffle"));
  const Corpus evalset = eval_subset(valid, cfg.eval_size);
  const std::size_t limit = update_limit(cfg, batches.batches_per_epoch());

  TrainResult result;
  Patience patience{cfg.patience};
  auto eval_row = [&](std::size_t update) {
    const double bleu = greedy_bleu(params, evalset, 0, cfg.threads);
    log.append({update, "eval", std::nullopt, bleu, std::nullopt, std::nullopt, cfg.tau, cfg.seed});
    return patience.observe(bleu);
  };

  std::size_t updates = 0;
  while (updates < limit) {
    const Batch batch = batches.next();
    const double objective = step_fn(batch, params, opt, root, updates);
    ++updates;
    log.append({updates, label, objective, std::nullopt, std::nullopt, std::nullopt, cfg.tau,
                cfg.seed});
    if (updates % cfg.eval_every == 0 && eval_row(updates)) {
      result.stopped_by_patience = true;
      break;
    }
  }
  result.updates = updates;
  result.best_eval_bleu = patience.best;
  result.final_bleu = greedy_bleu(params, valid, 0, cfg.threads);
  log.append({updates, "final", std::nullopt, result.final_bleu, std::nullopt, std::nullopt,
              cfg.tau, cfg.seed});
  result.params = std::move(params);
  return result;
}

}  // namespace

TrainResult train_mle(const Corpus& train, const Corpus& valid, ModelParams init,
                      const TrainConfig& cfg, MetricsLog& log) {
  return run_single(train, valid, std::move(init), cfg, log, "mle",
                    [&](const Batch& b, ModelParams& p, Optimizer& opt, const Rng&, std::size_t) {
                      return teacher_forcing_step(b, p, opt, cfg.threads);
                    });
}

TrainResult train_rl(const Corpus& train, const Corpus& valid, ModelParams init,
                     const TrainConfig& cfg, MetricsLog& log) {
  RewardBaseline baseline(cfg.baseline_decay);
  return run_single(train, valid, std::move(init), cfg, log, "rl",
                    [&](const Batch& b, ModelParams& p, Optimizer& opt, const Rng& root,
                        std::size_t update) {
                      const Rng rng = root.split("rl/sample").split(update);
                      if (!baseline.initialized()) {
                        // First batch: centre on its own mean reward.
                        baseline.reset(reinforce_gradient(p, b, 0.0, rng, cfg.threads).mean_reward);
                      }
                      return reinforce_step(b, p, opt, baseline, rng, cfg.threads);
                    });
}

GgdResult ggd_train(const Corpus& train, const Corpus& valid, const ModelParams& theta0,
                    const TrainConfig& cfg, MetricsLog& log) {
  cfg.validate();
  theta0.validate();
  GgdResult result;
  ModelParams theta = theta0;
  ModelParams phi = theta0;
  Optimizer gen_opt(cfg.optimizer);
  Optimizer disc_opt(cfg.disc_optimizer);

  const Rng root(cfg.seed);
  BatchIterator d_phi(train, cfg.batch_size, root.split("ggd/shuffle/generator"));
  BatchIterator d_theta(train, cfg.batch_size, root.split("ggd/shuffle/discriminator"));
  const Rng gen_rng = root.split("ggd/generator");
  const Rng disc_rng = root.split("ggd/discriminator");
  const Rng eval_rng = root.split("ggd/eval");

  GeneratorOptions gen_opts;
  gen_opts.decode.mode = cfg.generator_mode;
  gen_opts.decode.tau = cfg.tau;
  gen_opts.decode.beam = cfg.beam;
  gen_opts.estimator = cfg.estimator;
  gen_opts.entropy_reg = cfg.entropy_reg;

  const Corpus evalset = eval_subset(valid, cfg.eval_size);
  const std::size_t limit = update_limit(cfg, d_phi.batches_per_epoch());
  Patience patience{cfg.patience};

  // Greedy BLEU of phi plus theta's scores of references and of phi's
  // generations; the generations use the same noise at every evaluation.
  auto evaluate = [&](std::size_t update) {
    const double bleu = greedy_bleu(phi, evalset, 0, cfg.threads);
    const std::size_t n = evalset.size();
    std::vector<double> real(n), gen(n);
    parallel_for(n, cfg.threads, [&](std::size_t i) {
      const auto& pair = evalset.pairs[i];
      Rng local = eval_rng.split(static_cast<std::uint64_t>(i));
      const Sentence y = generate(phi, pair.source, gen_opts.decode, local);
      real[i] = log_prob(theta, pair.source, pair.target);
      const auto steps = step_log_probs(theta, pair.source, y);
      gen[i] = 0.0;
      for (const double v : steps) gen[i] += v;
    });
    double sr = 0.0, sg = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sr += real[i];
      sg += gen[i];
    }
    log.append({update, "eval", std::nullopt, bleu, sr / static_cast<double>(n),
                sg / static_cast<double>(n), cfg.tau, cfg.seed});
    return patience.observe(bleu);
  };

  result.initial_bleu = greedy_bleu(phi, valid, 0, cfg.threads);
  evaluate(0);

  std::size_t g_updates = 0, d_updates = 0;
  bool stop = false;
  while (!stop && g_updates < limit) {
    for (std::size_t k = 0; k < cfg.n_g && g_updates < limit; ++k) {
      const auto sources = unpadded_sources(d_phi.next());
      const auto step = ggd_generator_step(sources, phi, theta, gen_opt, gen_opts,
                                           gen_rng.split(g_updates), cfg.threads);
      ++g_updates;
      log.append({g_updates, "gen", step.objective, std::nullopt, std::nullopt,
                  step.disc_score_gen, cfg.tau, cfg.seed});
      if (g_updates % cfg.eval_every == 0 && evaluate(g_updates)) {
        result.stopped_by_patience = true;
        stop = true;
        break;
      }
    }
    // Discriminator updates after the last generator update would be unused.
    for (std::size_t k = 0; !stop && g_updates < limit && k < cfg.n_d; ++k) {
      const auto step = ggd_discriminator_step(d_theta.next(), phi, theta, disc_opt,
                                               gen_opts.decode, disc_rng.split(d_updates),
                                               cfg.threads);
      ++d_updates;
      log.append({g_updates, "disc", step.objective, std::nullopt, step.disc_score_real,
                  step.disc_score_gen, cfg.tau, cfg.seed});
    }
  }

  result.generator_updates = g_updates;
  result.discriminator_updates = d_updates;
  result.best_eval_bleu = patience.best;
  result.final_bleu = greedy_bleu(phi, valid, 0, cfg.threads);
  log.append({g_updates, "final", std::nullopt, result.final_bleu, std::nullopt, std::nullopt,
              cfg.tau, cfg.seed});
  result.generator = std::move(phi);
  result.discriminator = std::move(theta);
  return result;
}

}  // namespace ggd
