#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "jobgen/models/transformer.hpp"
#include "jobgen/tensor/checkpoint.hpp"

namespace jobgen::models {

// Causal language model with an untied output projection.
class GeneratorModel {
 public:
  GeneratorModel() = default;
  GeneratorModel(const TransformerConfig& config, std::uint64_t seed);

  // Logits [T, vocab] on a tape.
  Var logits(Tape& tape, std::span<const TokenId> tokens, Rng* dropout_rng = nullptr) const;
  // Inference-only convenience; same numbers as logits().
  Tensor forward_logits(std::span<const TokenId> tokens) const;

  const TransformerConfig& config() const noexcept { return body_.config(); }
  const TransformerBody& body() const noexcept { return body_; }
  ParameterStore& parameters() noexcept { return store_; }
  const ParameterStore& parameters() const noexcept { return store_; }
  std::size_t head_weight() const noexcept { return head_w_; }
  std::size_t head_bias() const noexcept { return head_b_; }

  // role is "generator" or "actor".
  tensor::Checkpoint to_checkpoint(const std::string& role) const;
  static GeneratorModel from_checkpoint(const tensor::Checkpoint& ckpt);

 private:
  ParameterStore store_;
  TransformerBody body_;
  std::size_t head_w_ = 0, head_b_ = 0;
};

// Log-probabilities [L] of target[i] under logits row prompt_len - 1 + i, where
// logits were computed over prompt ++ target[0 .. L-2]. Rows that belong to the
// prompt do not participate.
Var response_logprobs(Var logits, std::size_t prompt_len, std::span<const TokenId> target);

// Same quantity built from scratch on a tape, for training.
Var target_logprobs(Tape& tape, const GeneratorModel& model, std::span<const TokenId> prompt,
                    std::span<const TokenId> target, Rng* dropout_rng = nullptr);

// Per-token log-probabilities of target given prompt.
std::vector<double> sequence_logprobs(const GeneratorModel& model, std::span<const TokenId> prompt,
                                      std::span<const TokenId> target);

// Negative mean log-likelihood of the target tokens given the prompt.
Var sft_loss(Tape& tape, const GeneratorModel& model, std::span<const TokenId> prompt,
             std::span<const TokenId> target, Rng* dropout_rng = nullptr);

// prompt ++ target without the final target token: the positions whose
// next-token predictions score the target.
Tokens teacher_forcing_input(std::span<const TokenId> prompt, std::span<const TokenId> target);

}  // namespace jobgen::models
