#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ggd/decoding.hpp"
#include "ggd/gumbel.hpp"
#include "ggd/model.hpp"
#include "ggd/optimizer.hpp"

namespace ggd {

struct TrainConfig {
  // Updates the trained network (theta for MLE/REINFORCE, phi for GGD).
  OptimizerConfig optimizer{};
  // Discriminator updates during GGD.
  OptimizerConfig disc_optimizer{OptimizerKind::kRmsProp, 1e-5};
  double tau = 0.5;
  std::size_t batch_size = 32;
  std::size_t n_g = 10;
  std::size_t n_d = 1;
  bool entropy_reg = true;
  Estimator estimator = Estimator::kStGumbel;
  DecodeMode generator_mode = DecodeMode::kSampling;
  std::size_t beam = 5;
  // Stop after this many epochs over the (generator) training stream or
  // this many updates of the trained network, whichever comes first
  // (0 = unlimited; at least one must be set).
  std::size_t max_epochs = 0;
  std::size_t max_updates = 0;
  std::uint64_t seed = 1;
  // Evaluate every `eval_every` updates of the trained network; stop after
  // `patience` evaluations without a new best validation BLEU (0 disables).
  std::size_t eval_every = 100;
  std::size_t patience = 10;
  // Validation sentences used by periodic evaluations (0 = all). The final
  // evaluation always uses the full validation set.
  std::size_t eval_size = 0;
  double baseline_decay = 0.95;
  std::size_t threads = 1;

  // Throws ConfigError on invalid values; returns warnings for legal but
  // suspicious ones.
  std::vector<std::string> validate() const;
};

// Exponential moving average of rewards.
class RewardBaseline {
 public:
  explicit RewardBaseline(double decay = 0.95, double initial = 0.0);

  double value() const { return value_; }
  double decay() const { return decay_; }
  bool initialized() const { return initialized_; }
  // The first observation replaces the initial value.
  void update(double reward);
  // Sets the value directly (marks the baseline as initialized).
  void reset(double value);

 private:
  double decay_;
  double value_;
  bool initialized_ = false;
};

// ---------------------------------------------------------------------------
// Gradients

struct ValueAndGrads {
  double value = 0.0;
  ParamGrads grads;
};

// log p(target | source) (EOS optional) and its gradient.
ValueAndGrads log_prob_gradient(const ModelParams& params, std::span<const TokenId> source,
                               std::span<const TokenId> target);

// Token-averaged negative log-likelihood of a batch and its gradient.
ValueAndGrads teacher_forcing_gradient(const ModelParams& params, const Batch& batch,
                                      std::size_t threads = 1);

// ---------------------------------------------------------------------------
// Steps

// One teacher-forcing update; returns the loss before the update.
double teacher_forcing_step(const Batch& batch, ModelParams& params, Optimizer& opt,
                            std::size_t threads = 1);

struct ReinforceSample {
  Sentence sample;
  double reward = 0.0;
};

// Samples Y ~ p(.|X) per sentence (stream rng.split(i)) and returns the
// estimator -mean_i (R_i - b) grad log p(Y_i|X_i) together with the samples.
struct ReinforceGradient {
  ParamGrads grads;
  std::vector<ReinforceSample> samples;
  double mean_reward = 0.0;
};
ReinforceGradient reinforce_gradient(const ModelParams& params, const Batch& batch,
                                     double baseline, const Rng& rng, std::size_t threads = 1);

// One REINFORCE update with smoothed sentence BLEU as the reward; the
// baseline used for the batch is the value before the step, updated
// afterwards with the mean reward. Returns the mean reward.
double reinforce_step(const Batch& batch, ModelParams& params, Optimizer& opt,
                      RewardBaseline& baseline, const Rng& rng, std::size_t threads = 1);

struct GeneratorOptions {
  GumbelDecOptions decode{};
  Estimator estimator = Estimator::kStGumbel;
  bool entropy_reg = true;
};

struct GeneratorStep {
  // Mean over sentences of R(Y) = log p_theta(Y|X) - log p_phi'(Y|X)
  // (only the first term without the regularizer).
  double objective = 0.0;
  // Mean log p_theta(Y|X) of the generations.
  double disc_score_gen = 0.0;
  ParamGrads grads;  // gradient of -objective w.r.t. phi
  std::vector<Sentence> generations;
};

// Generator gradient through the straight-through tokens. phi' is a frozen
// copy of phi taken at the start of the step; per-sentence randomness comes
// from rng.split(i).
GeneratorStep ggd_generator_gradient(std::span<const Sentence> sources, const ModelParams& phi,
                                     const ModelParams& theta, const GeneratorOptions& opts,
                                     const Rng& rng, std::size_t threads = 1);

// Computes the gradient above and updates phi only.
GeneratorStep ggd_generator_step(std::span<const Sentence> sources, ModelParams& phi,
                                 const ModelParams& theta, Optimizer& opt,
                                 const GeneratorOptions& opts, const Rng& rng,
                                 std::size_t threads = 1);

// Relaxed objective for gradient checks: replays `replay` (words and
// noise), feeding softmax((g + a) / tau) forward instead of one-hot tokens,
// and scores the relaxed tokens with theta (minus phi' when regularized).
// `phi_frozen` is the frozen copy; `phi` is the differentiated copy.
struct RelaxedObjective {
  double value = 0.0;
  ParamGrads grads;  // gradient of +value w.r.t. phi
};
RelaxedObjective ggd_relaxed_objective(std::span<const TokenId> source, const ModelParams& phi,
                                       const ModelParams& phi_frozen, const ModelParams& theta,
                                       const GumbelTrajectory& replay, double tau,
                                       bool entropy_reg);

struct DiscriminatorStep {
  // Mean over sentences of log p_theta(Y*|X) - log p_theta(Y|X).
  double objective = 0.0;
  double disc_score_real = 0.0;
  double disc_score_gen = 0.0;
  ParamGrads grads;  // gradient of -objective w.r.t. theta
  std::vector<Sentence> generations;
};

// Sentences whose generation equals the reference contribute exactly zero.
DiscriminatorStep ggd_discriminator_gradient(const Batch& batch, const ModelParams& phi,
                                             const ModelParams& theta,
                                             const GumbelDecOptions& gen_decode, const Rng& rng,
                                             std::size_t threads = 1);

DiscriminatorStep ggd_discriminator_step(const Batch& batch, const ModelParams& phi,
                                         ModelParams& theta, Optimizer& opt,
                                         const GumbelDecOptions& gen_decode, const Rng& rng,
                                         std::size_t threads = 1);

// ---------------------------------------------------------------------------
// Metrics log

struct MetricsRow {
  std::size_t update = 0;
  std::string phase;
  std::optional<double> objective;
  std::optional<double> greedy_bleu;
  std::optional<double> disc_score_real;
  std::optional<double> disc_score_gen;
  double tau = 0.0;
  std::uint64_t seed = 0;
};

// Append-only CSV writer:
// update,phase,objective,greedy_bleu,disc_score_real,disc_score_gen,tau,seed
// Absent values are written as empty fields; numbers use 17 significant
// digits so identical runs produce identical files.
class MetricsLog {
 public:
  // `out` may be null (rows are then only kept in memory).
  explicit MetricsLog(std::ostream* out);
  void append(const MetricsRow& row);
  std::span<const MetricsRow> rows() const { return rows_; }

  static std::string header();
  static std::string format(const MetricsRow& row);

 private:
  std::ostream* out_;
  std::vector<MetricsRow> rows_;
};

// ---------------------------------------------------------------------------
// Loops

// Greedy BLEU of `params` on the first `limit` pairs of `corpus` (0 = all).
double greedy_bleu(const ModelParams& params, const Corpus& corpus, std::size_t limit = 0,
                   std::size_t threads = 1);

struct TrainResult {
  ModelParams params;              // parameters after the last update
  std::size_t updates = 0;
  double final_bleu = 0.0;         // full validation greedy BLEU of `params`
  double best_eval_bleu = 0.0;     // best periodic evaluation
  bool stopped_by_patience = false;
};

// Teacher forcing with the configured optimizer. Phases "mle" and "eval".
TrainResult train_mle(const Corpus& train, const Corpus& valid, ModelParams init,
                      const TrainConfig& cfg, MetricsLog& log);

// REINFORCE fine-tuning. Phases "rl" and "eval".
TrainResult train_rl(const Corpus& train, const Corpus& valid, ModelParams init,
                     const TrainConfig& cfg, MetricsLog& log);

struct GgdResult {
  ModelParams generator;      // phi
  ModelParams discriminator;  // theta
  std::size_t generator_updates = 0;
  std::size_t discriminator_updates = 0;
  double initial_bleu = 0.0;  // full validation greedy BLEU of the start point
  double final_bleu = 0.0;    // full validation greedy BLEU of the final phi
  double best_eval_bleu = 0.0;
  bool stopped_by_patience = false;
};

// The full discriminator-generator loop: phi starts as a copy of theta;
// the generator and discriminator consume two independently shuffled
// passes over the training pairs; each outer iteration runs n_g generator
// and n_d discriminator updates. Phases "gen", "disc" and "eval"; the
// `update` column counts generator updates.
GgdResult ggd_train(const Corpus& train, const Corpus& valid, const ModelParams& theta,
                    const TrainConfig& cfg, MetricsLog& log);

}  // namespace ggd
