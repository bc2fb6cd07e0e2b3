#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "ggd/autodiff.hpp"
#include "ggd/rng.hpp"

namespace ggd {

// Uniform draws are clamped into [kUniformClamp, 1 - kUniformClamp] before
// the double logarithm so that Gumbel noise is always finite.
inline constexpr double kUniformClamp = 1e-12;

// Temperatures below this are accepted but flagged by config validation:
// the relaxed Jacobian vanishes as tau -> 0.
inline constexpr double kTemperatureWarnFloor = 0.01;

double clamp_uniform(double u);

// -log(-log(u)) with u clamped.
double sample_gumbel(double u);

// Per-step noise: one standard Gumbel value per vocabulary word.
struct GumbelNoise {
  std::vector<double> g;
};

GumbelNoise draw_gumbel_noise(std::size_t k, Rng& rng);

// One-hot word, stored as its index.
struct HardToken {
  std::size_t index = 0;
  std::size_t size = 0;

  Tensor one_hot() const { return Tensor::one_hot(size, index); }
};

// Relaxed token softmax((g + a) / tau).
struct SoftToken {
  std::vector<double> probs;
  double tau = 1.0;
};

struct TrajectoryStep {
  HardToken hard;
  SoftToken soft;
  GumbelNoise noise;
  std::vector<double> logits;
};

// Noise aligned with a decoded sentence. Invariant: at every step
// argmax(noise + logits) selects the hard token.
struct GumbelTrajectory {
  std::vector<TrajectoryStep> steps;

  bool consistent() const;
};

enum class Estimator { kStGumbel, kSt };

Estimator parse_estimator(std::string_view name);
std::string_view to_string(Estimator e);

// Argmax with ties broken towards the lowest index.
std::size_t argmax(std::span<const double> x);

void check_temperature(double tau);

// argmax(g + a).
HardToken gumbel_max(std::span<const double> logits, std::span<const double> noise);

// softmax((g + a) / tau) as a plain value.
SoftToken gumbel_softmax(std::span<const double> logits, std::span<const double> noise, double tau);

// Taped relaxation; backward applies d yhat_i / d a_j = yhat_i (delta_ij - yhat_j) / tau.
Var gumbel_softmax(Var logits, std::span<const double> noise, double tau);

// Dense Jacobian d yhat_i / d a_j of the relaxation at `soft`.
Tensor gumbel_softmax_jacobian(const SoftToken& soft);

// Forward value one_hot(index); backward is the relaxed Jacobian evaluated
// at softmax((noise + a) / tau). An empty `noise` means zero noise.
Var straight_through(Var logits, std::size_t index, std::span<const double> noise, double tau);

struct StraightThroughToken {
  HardToken hard;
  SoftToken soft;
  Var token;
};

// ST-Gumbel: forward is gumbel_max(a, g), backward the relaxation at the
// same (a, g, tau). The noise is shared between the two passes.
StraightThroughToken st_gumbel(Var logits, std::span<const double> noise, double tau);

// Plain ST: forward is a categorical draw from softmax(a); backward is the
// relaxed Jacobian at softmax(a / tau), independent of the drawn word.
StraightThroughToken st_plain(Var logits, double tau, Rng& rng);

// Top-down construction of Gumbel noise consistent with a chosen word:
// returns g such that argmax(g + a) == selected, with the top value
// max(g + a) = -log(-log u) + logsumexp(a) and the remaining perturbed
// logits drawn from Gumbels truncated below it.
GumbelNoise infer_noise(std::size_t selected, std::span<const double> logits, Rng& rng);

}  // namespace ggd
