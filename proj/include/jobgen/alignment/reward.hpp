#pragma once

#include <functional>
#include <span>
#include <vector>

#include <json.hpp>

#include "jobgen/alignment/trainer.hpp"
#include "jobgen/corpus/datasets.hpp"
#include "jobgen/models/scorer.hpp"

namespace jobgen::alignment {

struct RmtConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  double learning_rate = 2e-3;
  double clip_norm = 1.0;
  std::uint64_t seed = 2;
  // Learning rate in the last epoch as a fraction of learning_rate; the rate
  // falls linearly across epochs. 1 keeps it constant.
  double final_lr_fraction = 1.0;
  // Draw a fresh mismatched JD for every CV each epoch instead of reusing the
  // stored one. Needs a negative sampler.
  bool resample_negatives = true;

  void validate() const;
};

void to_json(nlohmann::json& j, const RmtConfig& c);
void from_json(const nlohmann::json& j, RmtConfig& c);

// -log sigmoid(U(C, J+) - U(C, J-)).
Var rmt_loss(Tape& tape, const models::RewardModel& model, std::span<const TokenId> cv,
             std::span<const TokenId> positive, std::span<const TokenId> negative, Rng* dropout_rng = nullptr);

// Fraction of pairs with U(C, J+) > U(C, J-).
double pairwise_accuracy(const models::RewardModel& model, std::span<const corpus::RmtExample> pairs);

// Returns a mismatched JD for example `index` in `epoch`.
using NegativeSampler = std::function<corpus::JDDoc(const corpus::RmtExample&, std::size_t epoch, std::size_t index)>;

// Draws rule-failing JDs from the corpus generator, seeded per (epoch, index).
NegativeSampler world_negative_sampler(const corpus::World& world, std::uint64_t seed);

struct RmtEpoch {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double heldout_accuracy = 0.0;
};

struct RmtResult {
  double initial_accuracy = 0.0;
  std::vector<RmtEpoch> epochs;
};

RmtResult train_reward(models::RewardModel& model, std::span<const corpus::RmtExample> train,
                       std::span<const corpus::RmtExample> heldout, const RmtConfig& config,
                       const TrainHooks& hooks = {}, const NegativeSampler& sampler = {});

}  // namespace jobgen::alignment
