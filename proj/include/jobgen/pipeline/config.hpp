#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "jobgen/alignment/reward.hpp"
#include "jobgen/alignment/sft.hpp"
#include "jobgen/corpus/datasets.hpp"
#include "jobgen/evaluation/judge.hpp"
#include "jobgen/models/sampling.hpp"
#include "jobgen/ppo/ppo.hpp"
#include "jobgen/recsys/recsys.hpp"

namespace jobgen::pipeline {

struct GenerationSettings {
  models::SamplingConfig sampling;
  // Generated JDs per CV for the recommender.
  std::size_t n = 1;
  // Generation counts compared by the gen-sweep evaluation.
  std::vector<std::size_t> sweep{1, 2, 4, 8};
  recsys::PredictorKind sweep_predictor = recsys::PredictorKind::mlp;
  std::size_t max_prompt_len = 48;

  std::size_t max_n() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const GenerationSettings& g);
void from_json(const nlohmann::json& j, GenerationSettings& g);

struct QualitySettings {
  std::size_t bootstrap_resamples = 1000;
  double interval_level = 0.95;

  void validate() const;
};

void to_json(nlohmann::json& j, const QualitySettings& q);
void from_json(const nlohmann::json& j, QualitySettings& q);

// Everything one run needs. Stage seeds and model init seeds are derived from
// `seed` by name (see stage_seed), so the seed fields of the nested stage
// configs are overwritten on resolve. vocab_size 0 means "take it from the
// world".
struct RunConfig {
  std::uint64_t seed = 7;
  std::filesystem::path out = "out";
  corpus::WorldConfig world;
  corpus::DatasetConfig datasets;
  corpus::PromptTemplate prompt;
  models::TransformerConfig generator{0, 64, 64, 2, 4, 128, 0.0, 0.05};
  models::TransformerConfig reward_model{0, 64, 32, 2, 4, 64, 0.0, 0.05};
  recsys::RecModelConfig recommender;
  alignment::SftConfig sft;
  alignment::RmtConfig rmt;
  ppo::PPOConfig ppo;
  recsys::RecTrainConfig rec;
  evaluation::RubricConfig rubric;
  GenerationSettings generation;
  QualitySettings quality;

  void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
// Rejects unknown top-level keys; missing keys keep their defaults.
void from_json(const nlohmann::json& j, RunConfig& c);

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& config);

// SHA-256 of the canonical JSON form without the output directory.
std::string config_checksum(const RunConfig& config);

// Named sub-seed of the global seed: corpus, sft, rmt, ppo, rec, eval and
// the model initializations.
std::uint64_t stage_seed(const RunConfig& config, const std::string& name);

// Copy with vocabulary sizes filled from the world and every stage seed
// derived from the global seed.
RunConfig resolve(const RunConfig& config, const corpus::World& world);

}  // namespace jobgen::pipeline
