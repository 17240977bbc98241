#pragma once

#include <span>
#include <vector>

#include <json.hpp>

#include "jobgen/alignment/trainer.hpp"
#include "jobgen/corpus/prompt.hpp"
#include "jobgen/models/generator.hpp"

namespace jobgen::alignment {

struct SftConfig {
  std::size_t epochs = 6;
  std::size_t batch_size = 16;
  double learning_rate = 3e-3;
  double clip_norm = 1.0;
  std::uint64_t seed = 1;

  void validate() const;
};

void to_json(nlohmann::json& j, const SftConfig& c);
void from_json(const nlohmann::json& j, SftConfig& c);

// Per-token negative log-likelihood of the output region. Rejects instances
// whose mask is empty or does not cover exactly the output suffix.
Var sft_loss(Tape& tape, const models::GeneratorModel& model, const corpus::PromptInstance& instance,
             Rng* dropout_rng = nullptr);

struct HeldoutScore {
  double loss = 0.0;        // token-weighted mean negative log-likelihood
  double perplexity = 0.0;  // exp(loss)
  std::size_t tokens = 0;
};

HeldoutScore heldout_score(const models::GeneratorModel& model, std::span<const corpus::PromptInstance> data);

struct SftEpoch {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  HeldoutScore heldout;
};

struct SftResult {
  HeldoutScore initial;
  std::vector<SftEpoch> epochs;
};

SftResult train_sft(models::GeneratorModel& model, std::span<const corpus::PromptInstance> train,
                    std::span<const corpus::PromptInstance> heldout, const SftConfig& config,
                    const TrainHooks& hooks = {});

}  // namespace jobgen::alignment
