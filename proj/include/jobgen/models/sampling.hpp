#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "jobgen/models/generator.hpp"

namespace jobgen::models {

struct SamplingConfig {
  double temperature = 0.8;
  std::size_t top_k = 20;
  std::size_t max_new_tokens = 32;
  TokenId eos_id = kEosToken;
  std::uint64_t seed = 0;
  // Argmax decoding; ignores temperature, top_k and seed.
  bool greedy = false;

  void validate() const;
};

void to_json(nlohmann::json& j, const SamplingConfig& c);
void from_json(const nlohmann::json& j, SamplingConfig& c);

struct Generation {
  Tokens tokens;
  // Log-probability of each sampled token under the model's untempered
  // next-token distribution.
  std::vector<double> logprobs;
  bool hit_eos = false;
};

// Feeds one token at a time and caches per-layer keys and values, so each step
// costs O(prefix) instead of a full forward pass. Inference only.
class IncrementalDecoder {
 public:
  explicit IncrementalDecoder(const GeneratorModel& model);

  // Consumes one token; returns next-token logits [vocab].
  std::span<const double> step(TokenId token);
  std::size_t position() const noexcept { return pos_; }

 private:
  const GeneratorModel& model_;
  std::vector<std::vector<double>> keys_, values_;  // per layer, [pos, width]
  std::vector<double> logits_;
  std::size_t pos_ = 0;
};

// Index drawn from the top-k tempered distribution of logits, or the argmax
// in greedy mode. Ties resolve to the lower index.
TokenId sample_token(std::span<const double> logits, const SamplingConfig& cfg, Rng& rng);

Generation generate(const GeneratorModel& model, std::span<const TokenId> prompt, const SamplingConfig& cfg,
                    Rng& rng);
// Seeds a fresh stream from cfg.seed.
Generation generate(const GeneratorModel& model, std::span<const TokenId> prompt, const SamplingConfig& cfg);

}  // namespace jobgen::models
