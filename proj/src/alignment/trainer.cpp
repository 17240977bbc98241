#include "jobgen/alignment/trainer.hpp"

#include <cmath>
#include <numeric>

#include "jobgen/common/error.hpp"

namespace jobgen::alignment {

StepResult minibatch_step(tensor::ParameterStore& store, tensor::Optimizer& optimizer,
                          std::span<const std::size_t> batch, const ExampleLoss& loss) {
  if (batch.empty()) throw ConfigError("minibatch_step: empty batch");
  tensor::Gradients total;
  double loss_sum = 0.0;
  for (std::size_t ex : batch) {
    Tape tape;
    Var l = loss(ex, tape);
    const double v = l.value().item();
    if (!std::isfinite(v)) throw DivergenceError("non-finite loss on example " + std::to_string(ex));
    loss_sum += v;
    total.accumulate(tape.backward(l.id));
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  total.scale(inv);
  StepResult r;
  r.mean_loss = loss_sum * inv;
  r.grad_norm = std::sqrt(total.squared_norm());
  const auto params = store.pointers();
  optimizer.step(params, total);
  return r;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, epoch));
  rng.shuffle(order);
  return order;
}

std::vector<std::span<const std::size_t>> batches(std::span<const std::size_t> order, std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::vector<std::span<const std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    out.push_back(order.subspan(i, std::min(batch_size, order.size() - i)));
  }
  return out;
}

}  // namespace jobgen::alignment
