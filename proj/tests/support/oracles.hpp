#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "ggd/model.hpp"

namespace ggd::testing {

// Wide enough that the change of a probability as small as 1e-170 under a
// 1e-20 step is still resolved to many digits.
using mp_wide = boost::multiprecision::number<boost::multiprecision::cpp_bin_float<250>>;

// Central difference of f at every parameter entry; f is evaluated with
// `params` perturbed in place and restored afterwards.
inline ParamGrads fd_param_gradient(ModelParams& params, const std::function<double()>& f,
                                    double h = 1e-5) {
  ParamGrads g = ParamGrads::zeros_like(params);
  auto tensors = params.tensors();
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    auto v = tensors[t].data();
    auto out = g.tensors[t].data();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double x = v[i];
      v[i] = x + h;
      const double fp = f();
      v[i] = x - h;
      const double fm = f();
      v[i] = x;
      out[i] = (fp - fm) / (2.0 * h);
    }
  }
  return g;
}

// Worst per-tensor normwise relative error:
// max_t  max_i |g_i - r_i| / max(||r_t||_inf, ||g_t||_inf).
inline double max_relative_error(const ParamGrads& g, const ParamGrads& ref) {
  double worst = 0.0;
  for (std::size_t t = 0; t < g.tensors.size(); ++t) {
    const auto a = g.tensors[t].data();
    const auto b = ref.tensors[t].data();
    double scale = 0.0, diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
      diff = std::max(diff, std::abs(a[i] - b[i]));
    }
    if (scale > 0.0) worst = std::max(worst, diff / scale);
  }
  return worst;
}

// softmax((g + a) / tau) in 250-digit arithmetic.
inline std::vector<mp_wide> relaxed_mp(const std::vector<mp_wide>& a, std::span<const double> g,
                                    const mp_wide& tau) {
  std::vector<mp_wide> x(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) x[i] = (a[i] + mp_wide(g[i])) / tau;
  const mp_wide m = *std::max_element(x.begin(), x.end());
  mp_wide sum = 0;
  for (auto& v : x) {
    v = exp(v - m);
    sum += v;
  }
  for (auto& v : x) v /= sum;
  return x;
}

// d yhat_r / d a_c by 250-digit central differences (h = 1e-20); accurate
// far beyond double precision, entry by entry.
inline std::vector<std::vector<double>> relaxed_jacobian_fd(std::span<const double> a,
                                                            std::span<const double> g,
                                                            double tau) {
  const std::size_t k = a.size();
  const mp_wide h("1e-20");
  const mp_wide t(tau);
  std::vector<std::vector<double>> jac(k, std::vector<double>(k));
  std::vector<mp_wide> base(a.begin(), a.end());
  for (std::size_t c = 0; c < k; ++c) {
    auto plus = base, minus = base;
    plus[c] += h;
    minus[c] -= h;
    const auto yp = relaxed_mp(plus, g, t);
    const auto ym = relaxed_mp(minus, g, t);
    for (std::size_t r = 0; r < k; ++r) {
      jac[r][c] = static_cast<double>((yp[r] - ym[r]) / (2 * h));
    }
  }
  return jac;
}

}  // namespace ggd::testing
