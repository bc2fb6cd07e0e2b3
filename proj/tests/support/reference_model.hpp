#pragma once

// Plain-loop forward pass of the encoder-decoder, written independently of
// the tape so it can serve as an oracle for the model code.

#include <cmath>
#include <span>
#include <vector>

#include "ggd/model.hpp"

namespace ggd::testing {

using Vec = std::vector<double>;

inline Vec affine(const Tensor& w, const Vec& x, const Tensor* b = nullptr) {
  Vec y(w.rows(), 0.0);
  for (std::size_t r = 0; r < w.rows(); ++r) {
    double s = b ? (*b)[r] : 0.0;
    for (std::size_t c = 0; c < w.cols(); ++c) s += w.at(r, c) * x[c];
    y[r] = s;
  }
  return y;
}

inline double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Vec gru(const Tensor& w, const Tensor& u, const Tensor& b, const Vec& x, const Vec& h) {
  const std::size_t n = h.size();
  const Vec wx = affine(w, x, &b);
  const Vec uh = affine(u, h);
  Vec out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = sigm(wx[i] + uh[i]);
    const double z = sigm(wx[n + i] + uh[n + i]);
    const double c = std::tanh(wx[2 * n + i] + r * uh[2 * n + i]);
    out[i] = (1.0 - z) * h[i] + z * c;
  }
  return out;
}

inline Vec row_of(const Tensor& m, std::size_t r) {
  return Vec(m.row(r).begin(), m.row(r).end());
}

struct ReferenceEncoding {
  std::vector<Vec> fwd, bwd, annotations;
  Vec init;
};

inline ReferenceEncoding reference_encode(const ModelParams& p, std::span<const TokenId> x) {
  using P = ParamId;
  const std::size_t h = p.config().hidden;
  std::vector<TokenId> toks;
  for (TokenId t : x) {
    if (t != kPad) toks.push_back(t);
  }
  const std::size_t n = toks.size();
  ReferenceEncoding e;
  e.fwd.resize(n);
  e.bwd.resize(n);
  Vec s(h, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    s = gru(p[P::kEncFwdW], p[P::kEncFwdU], p[P::kEncFwdB], row_of(p[P::kSourceEmbed], toks[j]), s);
    e.fwd[j] = s;
  }
  s.assign(h, 0.0);
  for (std::size_t j = n; j-- > 0;) {
    s = gru(p[P::kEncBwdW], p[P::kEncBwdU], p[P::kEncBwdB], row_of(p[P::kSourceEmbed], toks[j]), s);
    e.bwd[j] = s;
  }
  Vec mean(2 * h, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    Vec a = e.fwd[j];
    a.insert(a.end(), e.bwd[j].begin(), e.bwd[j].end());
    for (std::size_t i = 0; i < 2 * h; ++i) mean[i] += a[i] / static_cast<double>(n);
    e.annotations.push_back(a);
  }
  e.init = affine(p[P::kInitW], mean, &p[P::kInitB]);
  for (double& v : e.init) v = std::tanh(v);
  return e;
}

// Per-step log-softmax vectors under teacher forcing on `y`.
inline std::vector<Vec> reference_step_log_probs(const ModelParams& p, std::span<const TokenId> x,
                                                 std::span<const TokenId> y) {
  using P = ParamId;
  const auto enc = reference_encode(p, x);
  const std::size_t n = enc.annotations.size();
  Vec z = enc.init;
  Vec prev(p.config().embed, 0.0);
  std::vector<Vec> out;
  for (const TokenId tok : y) {
    const Vec q = affine(p[P::kAttW], z, &p[P::kAttB]);
    Vec energies(n);
    for (std::size_t j = 0; j < n; ++j) {
      const Vec key = affine(p[P::kAttU], enc.annotations[j]);
      double e = 0.0;
      for (std::size_t i = 0; i < key.size(); ++i) e += p[P::kAttV][i] * std::tanh(key[i] + q[i]);
      energies[j] = e;
    }
    double m = energies[0];
    for (double e : energies) m = std::max(m, e);
    double zsum = 0.0;
    for (double& e : energies) zsum += (e = std::exp(e - m));
    Vec ctx(enc.annotations[0].size(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < ctx.size(); ++i) ctx[i] += energies[j] / zsum * enc.annotations[j][i];
    }
    Vec in = prev;
    in.insert(in.end(), ctx.begin(), ctx.end());
    z = gru(p[P::kDecW], p[P::kDecU], p[P::kDecB], in, z);
    Vec zc = z;
    zc.insert(zc.end(), ctx.begin(), ctx.end());
    Vec logits = affine(p[P::kOutW], zc, &p[P::kOutB]);
    double lm = logits[0];
    for (double v : logits) lm = std::max(lm, v);
    double ls = 0.0;
    for (double v : logits) ls += std::exp(v - lm);
    for (double& v : logits) v -= lm + std::log(ls);
    out.push_back(logits);
    prev = row_of(p[P::kTargetEmbed], tok);
  }
  return out;
}

inline double reference_log_prob(const ModelParams& p, std::span<const TokenId> x,
                                 std::span<const TokenId> y) {
  const auto steps = reference_step_log_probs(p, x, y);
  double s = 0.0;
  for (std::size_t t = 0; t < y.size(); ++t) s += steps[t][y[t]];
  return s;
}

inline ModelConfig tiny_config(std::size_t k, std::uint64_t seed = 1, std::size_t hidden = 6) {
  ModelConfig c;
  c.source_vocab = k;
  c.target_vocab = k;
  c.embed = 4;
  c.hidden = hidden;
  c.attention = 5;
  c.seed = seed;
  return c;
}

// Tiny model with weights spread wider than the default init so that
// distributions are far from uniform.
inline ModelParams tiny_model(std::size_t k, std::uint64_t seed = 1, double scale = 1.0,
                              std::size_t hidden = 6) {
  ModelParams p(tiny_config(k, seed, hidden));
  Rng rng(seed * 7919 + 1);
  for (auto& t : p.tensors()) {
    for (double& v : t.data()) v = rng.uniform(-scale, scale);
  }
  return p;
}

}  // namespace ggd::testing
