#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>

#include "jobgen/tensor/tape.hpp"
#include "jobgen/tensor/tensor.hpp"

namespace jobgen::tensor {

enum class OptimizerKind { sgd, adam };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(const std::string& s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Global gradient-norm clip; 0 disables.
  double clip_norm = 0.0;

  void validate() const;
};

struct OptimizerState {
  double learning_rate = 1e-3;
  std::uint64_t step = 0;
  // Keyed by parameter name; shapes mirror the parameters.
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;
};

// Gradient-descent optimizer with an adaptive-moment mode and a plain mode
// (theta <- theta - lr * grad).
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config);

  // Applies one update. Parameters without a gradient entry are treated as
  // having zero gradient. Throws DivergenceError naming the first parameter
  // whose gradient is not finite; in that case nothing is modified.
  void step(std::span<Parameter* const> params, const Gradients& grads);

  const OptimizerConfig& config() const noexcept { return config_; }
  OptimizerState& state() noexcept { return state_; }
  const OptimizerState& state() const noexcept { return state_; }

 private:
  OptimizerConfig config_;
  OptimizerState state_;
};

}  // namespace jobgen::tensor
