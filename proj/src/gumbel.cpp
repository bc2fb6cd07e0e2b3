#include "ggd/gumbel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ggd/error.hpp"

namespace ggd {

namespace {

void require_same_length(std::span<const double> a, std::span<const double> g, const char* op) {
  if (a.empty()) throw DimensionError(std::string(op) + ": empty logits");
  if (a.size() != g.size()) {
    throw DimensionError(std::string(op) + ": logits and noise lengths differ");
  }
}

std::vector<double> perturbed(std::span<const double> a, std::span<const double> g) {
  std::vector<double> x(a.begin(), a.end());
  if (!g.empty()) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += g[i];
  }
  return x;
}

std::vector<double> relaxed(std::span<const double> a, std::span<const double> g, double tau) {
  auto x = perturbed(a, g);
  for (double& v : x) v /= tau;
  return softmax_values(x);
}

// grad_a_j += (1/tau) yhat_j sum_{i != j} yhat_i (gy_j - gy_i)
//
// Equal to the textbook vector-Jacobian product of the relaxation, but
// written without the 1 - yhat_j cancellation so entries stay accurate to
// full relative precision when yhat is nearly one-hot.
void relaxed_vjp(std::span<const double> soft, double tau, std::span<const double> gy,
                 std::span<double> ga) {
  const std::size_t k = soft.size();
  for (std::size_t j = 0; j < k; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      if (i != j) s += soft[i] * (gy[j] - gy[i]);
    }
    ga[j] += soft[j] * s / tau;
  }
}

// log(1 + e^x) without overflow.
double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

double clamp_uniform(double u) { return std::clamp(u, kUniformClamp, 1.0 - kUniformClamp); }

double sample_gumbel(double u) { return -std::log(-std::log(clamp_uniform(u))); }

GumbelNoise draw_gumbel_noise(std::size_t k, Rng& rng) {
  GumbelNoise n;
  n.g.resize(k);
  for (double& v : n.g) v = sample_gumbel(rng.uniform());
  return n;
}

bool GumbelTrajectory::consistent() const {
  return std::all_of(steps.begin(), steps.end(), [](const TrajectoryStep& s) {
    return gumbel_max(s.logits, s.noise.g).index == s.hard.index;
  });
}

Estimator parse_estimator(std::string_view name) {
  if (name == "st-gumbel") return Estimator::kStGumbel;
  if (name == "st") return Estimator::kSt;
  throw ConfigError("unknown estimator '" + std::string(name) + "' (expected st-gumbel or st)");
}

std::string_view to_string(Estimator e) {
  return e == Estimator::kStGumbel ? "st-gumbel" : "st";
}

std::size_t argmax(std::span<const double> x) {
  if (x.empty()) throw DimensionError("argmax: empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (x[i] > x[best]) best = i;
  }
  return best;
}

void check_temperature(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw DomainError("temperature must be positive and finite, got " + std::to_string(tau));
  }
}

HardToken gumbel_max(std::span<const double> logits, std::span<const double> noise) {
  require_same_length(logits, noise, "gumbel_max");
  return {argmax(perturbed(logits, noise)), logits.size()};
}

SoftToken gumbel_softmax(std::span<const double> logits, std::span<const double> noise,
                         double tau) {
  require_same_length(logits, noise, "gumbel_softmax");
  check_temperature(tau);
  return {relaxed(logits, noise, tau), tau};
}

Var gumbel_softmax(Var logits, std::span<const double> noise, double tau) {
  const auto a = logits.value().data();
  require_same_length(a, noise, "gumbel_softmax");
  check_temperature(tau);
  Tensor y = Tensor::vector(relaxed(a, noise, tau));
  return logits.tape()->record("gumbel_softmax", std::move(y), {logits},
                               [logits, tau](Tape& tp, const Tensor& out, std::span<const double> g) {
                                 if (!logits.requires_grad()) return;
                                 relaxed_vjp(out.data(), tau, g, tp.grad_buffer(logits));
                               });
}

Tensor gumbel_softmax_jacobian(const SoftToken& soft) {
  check_temperature(soft.tau);
  const std::size_t k = soft.probs.size();
  Tensor j(Shape::matrix(k, k));
  for (std::size_t r = 0; r < k; ++r) {
    double rest = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      if (i != r) rest += soft.probs[i];
    }
    for (std::size_t c = 0; c < k; ++c) {
      j.at(r, c) = (r == c ? soft.probs[r] * rest : -soft.probs[r] * soft.probs[c]) / soft.tau;
    }
  }
  return j;
}

Var straight_through(Var logits, std::size_t index, std::span<const double> noise, double tau) {
  const auto a = logits.value().data();
  if (!noise.empty()) require_same_length(a, noise, "straight_through");
  check_temperature(tau);
  if (index >= a.size()) throw DimensionError("straight_through: index out of range");
  auto soft = relaxed(a, noise, tau);
  return logits.tape()->record(
      "straight_through", Tensor::one_hot(a.size(), index), {logits},
      [logits, tau, soft = std::move(soft)](Tape& tp, const Tensor&, std::span<const double> g) {
        if (!logits.requires_grad()) return;
        relaxed_vjp(soft, tau, g, tp.grad_buffer(logits));
      });
}

StraightThroughToken st_gumbel(Var logits, std::span<const double> noise, double tau) {
  const auto a = logits.value().data();
  StraightThroughToken out;
  out.hard = gumbel_max(a, noise);
  out.soft = gumbel_softmax(a, noise, tau);
  out.token = straight_through(logits, out.hard.index, noise, tau);
  return out;
}

StraightThroughToken st_plain(Var logits, double tau, Rng& rng) {
  const auto a = logits.value().data();
  if (a.empty()) throw DimensionError("st_plain: empty logits");
  check_temperature(tau);
  StraightThroughToken out;
  out.hard = {rng.categorical(softmax_values(a)), a.size()};
  out.soft = {relaxed(a, {}, tau), tau};
  out.token = straight_through(logits, out.hard.index, {}, tau);
  return out;
}

GumbelNoise infer_noise(std::size_t selected, std::span<const double> logits, Rng& rng) {
  const std::size_t k = logits.size();
  if (k == 0) throw DimensionError("infer_noise: empty logits");
  if (selected >= k) throw DimensionError("infer_noise: selected index out of range");

  // Top gumbel: the maximum of the perturbed logits is Gumbel(logsumexp(a)).
  const double top = sample_gumbel(rng.uniform()) + log_sum_exp(logits);
  GumbelNoise n;
  n.g.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    double perturbed_logit = top;
    if (i != selected) {
      const double free_draw = sample_gumbel(rng.uniform()) + logits[i];
      // Gumbel(a_i) truncated to lie below `top`.
      perturbed_logit = top - softplus(top - free_draw);
    }
    n.g[i] = perturbed_logit - logits[i];
  }

  // Subtracting and re-adding a_i can round a truncated value up onto the
  // top; push such values down by ulps so the maximum stays unique.
  const double winner = n.g[selected] + logits[selected];
  for (std::size_t i = 0; i < k; ++i) {
    if (i == selected) continue;
    while (n.g[i] + logits[i] >= winner) {
      n.g[i] = std::nextafter(n.g[i], -std::numeric_limits<double>::infinity());
    }
  }
  return n;
}

}  // namespace ggd
