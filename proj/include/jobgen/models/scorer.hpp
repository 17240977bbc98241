#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "jobgen/models/transformer.hpp"
#include "jobgen/tensor/checkpoint.hpp"

namespace jobgen::models {

// Transformer trunk with a linear scalar head read at the final position.
class ScalarHeadModel {
 public:
  ScalarHeadModel() = default;
  ScalarHeadModel(const TransformerConfig& config, std::uint64_t seed);

  // [1,1] score of an already assembled sequence.
  Var score_sequence(Tape& tape, std::span<const TokenId> tokens, Rng* dropout_rng = nullptr) const;

  const TransformerConfig& config() const noexcept { return body_.config(); }
  ParameterStore& parameters() noexcept { return store_; }
  const ParameterStore& parameters() const noexcept { return store_; }
  std::size_t head_weight() const noexcept { return head_w_; }
  std::size_t head_bias() const noexcept { return head_b_; }

 protected:
  tensor::Checkpoint checkpoint(const std::string& role) const;
  void load(const tensor::Checkpoint& ckpt);

  ParameterStore store_;
  TransformerBody body_;
  std::size_t head_w_ = 0, head_b_ = 0;
};

// Scores a (CV, JD) pair from CV ++ SEP ++ JD ++ EOS.
class RewardModel : public ScalarHeadModel {
 public:
  using ScalarHeadModel::ScalarHeadModel;

  static Tokens assemble(std::span<const TokenId> cv, std::span<const TokenId> jd);
  Var score(Tape& tape, std::span<const TokenId> cv, std::span<const TokenId> jd, Rng* dropout_rng = nullptr) const;
  double score(std::span<const TokenId> cv, std::span<const TokenId> jd) const;

  tensor::Checkpoint to_checkpoint() const { return checkpoint("reward"); }
  static RewardModel from_checkpoint(const tensor::Checkpoint& ckpt);
};

// Estimates the expected reward of a CV alone, from CV ++ SEP.
class CriticModel : public ScalarHeadModel {
 public:
  using ScalarHeadModel::ScalarHeadModel;
  CriticModel() = default;

  // Same architecture, weights copied from the reward model.
  static CriticModel from_reward(const RewardModel& reward);

  static Tokens assemble(std::span<const TokenId> cv);
  Var value(Tape& tape, std::span<const TokenId> cv) const;
  double value(std::span<const TokenId> cv) const;

  tensor::Checkpoint to_checkpoint() const { return checkpoint("critic"); }
  static CriticModel from_checkpoint(const tensor::Checkpoint& ckpt);

 private:
  explicit CriticModel(const ScalarHeadModel& weights) : ScalarHeadModel(weights) {}
};

}  // namespace jobgen::models
