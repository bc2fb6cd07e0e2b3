#pragma once

#include <array>
#include <string_view>

#include "ggd/model.hpp"

namespace ggd {

enum class OptimizerKind { kAdadelta, kRmsProp };

OptimizerKind parse_optimizer(std::string_view name);
std::string_view to_string(OptimizerKind k);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdadelta;
  // RMSProp step size; Adadelta multiplies its update by it (1 = the
  // textbook rule, which has no learning rate).
  double learning_rate = 1.0;
  double rho = 0.95;
  double epsilon = 1e-6;
  // Rescale the full gradient to this global L2 norm when exceeded
  // (0 disables).
  double clip_norm = 0.0;

  void validate() const;
};

// Descends on the gradient of a loss. Running averages are kept per
// parameter tensor and carried across steps.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config);

  const OptimizerConfig& config() const { return config_; }
  std::size_t steps() const { return steps_; }

  // Throws ContractError when the shapes of params, grads and the state
  // disagree.
  void step(ModelParams& params, const ParamGrads& grads);

 private:
  OptimizerConfig config_;
  std::size_t steps_ = 0;
  bool initialized_ = false;
  std::array<Tensor, kNumParams> sq_grad_;
  std::array<Tensor, kNumParams> sq_update_;
};

}  // namespace ggd
