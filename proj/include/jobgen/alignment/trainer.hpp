#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "jobgen/common/metrics.hpp"
#include "jobgen/common/rng.hpp"
#include "jobgen/tensor/optimizer.hpp"
#include "jobgen/tensor/tape.hpp"

namespace jobgen::alignment {

using tensor::Tape;
using tensor::Var;

// Optional plumbing shared by the stage trainers.
struct TrainHooks {
  MetricsLog* log = nullptr;
  // Called after every completed epoch (1-based) with the optimizer, so the
  // caller can write a resumable checkpoint.
  std::function<void(std::size_t epoch, const tensor::Optimizer&)> on_epoch;
  // Resume: epochs before start_epoch are skipped and the optimizer state is
  // restored from resume_state.
  std::size_t start_epoch = 0;
  const tensor::OptimizerState* resume_state = nullptr;
};

// Builds the loss of one example on a private tape.
using ExampleLoss = std::function<Var(std::size_t example, Tape& tape)>;

struct StepResult {
  double mean_loss = 0.0;
  double grad_norm = 0.0;  // before clipping
};

// Mean-reduced minibatch update: one tape per example, gradients summed and
// scaled by 1/B, then a single optimizer step. A non-finite loss or gradient
// throws DivergenceError before any parameter changes.
StepResult minibatch_step(tensor::ParameterStore& store, tensor::Optimizer& optimizer,
                          std::span<const std::size_t> batch, const ExampleLoss& loss);

// Example order for one epoch, derived from (seed, epoch) alone so a resumed
// run visits the same order.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

// Consecutive slices of order of at most batch_size elements.
std::vector<std::span<const std::size_t>> batches(std::span<const std::size_t> order, std::size_t batch_size);

}  // namespace jobgen::alignment
