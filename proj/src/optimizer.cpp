#include "ggd/optimizer.hpp"

#include <cmath>
#include <string>

#include "ggd/error.hpp"

namespace ggd {

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adadelta") return OptimizerKind::kAdadelta;
  if (name == "rmsprop") return OptimizerKind::kRmsProp;
  throw ConfigError("unknown optimizer '" + std::string(name) + "' (expected adadelta or rmsprop)");
}

std::string_view to_string(OptimizerKind k) {
  return k == OptimizerKind::kAdadelta ? "adadelta" : "rmsprop";
}

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be positive");
  }
  if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("optimizer rho must be in (0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("optimizer epsilon must be positive");
  if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm must be >= 0");
}

Optimizer::Optimizer(OptimizerConfig config) : config_(config) { config_.validate(); }

void Optimizer::step(ModelParams& params, const ParamGrads& grads) {
  auto tensors = params.tensors();
  for (std::size_t i = 0; i < kNumParams; ++i) {
    if (grads.tensors[i].shape() != tensors[i].shape()) {
      throw ContractError("optimizer: gradient shape " + grads.tensors[i].shape().str() +
                          " does not match parameter " +
                          std::string(param_name(static_cast<ParamId>(i))) + " " +
                          tensors[i].shape().str());
    }
  }
  if (!initialized_) {
    for (std::size_t i = 0; i < kNumParams; ++i) {
      sq_grad_[i] = Tensor(tensors[i].shape());
      sq_update_[i] = Tensor(tensors[i].shape());
    }
    initialized_ = true;
  }
  for (std::size_t i = 0; i < kNumParams; ++i) {
    if (sq_grad_[i].shape() != tensors[i].shape()) {
      throw ContractError("optimizer: state does not match parameter " +
                          std::string(param_name(static_cast<ParamId>(i))));
    }
  }

  double factor = 1.0;
  if (config_.clip_norm > 0.0) {
    const double norm = grads.norm();
    if (norm > config_.clip_norm) factor = config_.clip_norm / norm;
  }

  const double rho = config_.rho;
  const double eps = config_.epsilon;
  const double lr = config_.learning_rate;
  for (std::size_t i = 0; i < kNumParams; ++i) {
    auto p = tensors[i].data();
    const auto g = grads.tensors[i].data();
    auto eg = sq_grad_[i].data();
    auto ex = sq_update_[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = factor * g[j];
      eg[j] = rho * eg[j] + (1.0 - rho) * gj * gj;
      if (config_.kind == OptimizerKind::kAdadelta) {
        const double dx = -std::sqrt(ex[j] + eps) / std::sqrt(eg[j] + eps) * gj;
        ex[j] = rho * ex[j] + (1.0 - rho) * dx * dx;
        p[j] += lr * dx;
      } else {
        p[j] -= lr * gj / std::sqrt(eg[j] + eps);
      }
    }
  }
  ++steps_;
}

}  // namespace ggd
