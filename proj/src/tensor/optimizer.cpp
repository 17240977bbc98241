#include "jobgen/tensor/optimizer.hpp"

#include <cmath>

#include "jobgen/common/error.hpp"

namespace jobgen::tensor {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind optimizer_kind_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer kind: " + s);
}

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("optimizer: learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("optimizer: betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("optimizer: epsilon must be positive");
  if (clip_norm < 0.0) throw ConfigError("optimizer: clip norm must be non-negative");
}

Optimizer::Optimizer(OptimizerConfig config) : config_(config) {
  config_.validate();
  state_.learning_rate = config_.learning_rate;
}

void Optimizer::step(std::span<Parameter* const> params, const Gradients& grads) {
  double sq = 0.0;
  for (Parameter* p : params) {
    const Tensor* g = grads.find(*p);
    if (!g) continue;
    if (!g->same_shape(p->value)) {
      throw ShapeError("optimizer: gradient shape " + shape_string(g->shape()) + " for parameter " + p->name + " " +
                       shape_string(p->value.shape()));
    }
    if (!g->all_finite()) throw DivergenceError("non-finite gradient for parameter " + p->name);
    for (double v : g->data()) sq += v * v;
  }

  double factor = 1.0;
  if (config_.clip_norm > 0.0) {
    const double norm = std::sqrt(sq);
    if (norm > config_.clip_norm) factor = config_.clip_norm / norm;
  }

  ++state_.step;
  const double lr = state_.learning_rate;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(state_.step));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(state_.step));

  for (Parameter* p : params) {
    const Tensor* g = grads.find(*p);
    if (config_.kind == OptimizerKind::sgd) {
      if (!g) continue;
      p->value.add_scaled(*g, -lr * factor);
      continue;
    }
    auto [mit, m_new] = state_.first_moment.try_emplace(p->name, p->value.shape(), 0.0);
    auto [vit, v_new] = state_.second_moment.try_emplace(p->name, p->value.shape(), 0.0);
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      const double gi = g ? (*g)[i] * factor : 0.0;
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * gi;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p->value[i] -= lr * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

}  // namespace jobgen::tensor
