#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "jobgen/pipeline/config.hpp"

namespace jobgen::pipeline {

// Where a run keeps its artifacts under the output directory.
class RunLayout {
 public:
  explicit RunLayout(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const noexcept { return root_; }
  std::filesystem::path corpus_dir() const { return root_ / "corpus"; }
  std::filesystem::path checkpoint(const std::string& name) const { return root_ / "checkpoints" / (name + ".ckpt"); }
  std::filesystem::path generations(const std::string& source) const {
    return root_ / "generations" / (source + ".jsonl");
  }
  std::filesystem::path metrics(const std::string& name) const { return root_ / "metrics" / (name + ".jsonl"); }
  std::filesystem::path report(const std::string& name) const { return root_ / "reports" / (name + ".json"); }

 private:
  std::filesystem::path root_;
};

// Generation sources for the recommender and the quality tournament.
inline constexpr const char* kSftSource = "sft";
inline constexpr const char* kPpoSource = "ppo";

// Recommender variants: no generations, or generations from either source.
inline const std::vector<std::string> kRecVariants{"base", kSftSource, kPpoSource};

std::string rec_cell_name(recsys::PredictorKind predictor, const std::string& variant);

// One run: the resolved configuration and its artifact layout. Every stage
// checks its prerequisites and throws MissingPrerequisite naming the first
// absent artifact. Each returns a JSON summary that is also written under
// reports/.
class Pipeline {
 public:
  explicit Pipeline(const RunConfig& config);

  const RunConfig& config() const noexcept { return config_; }
  const corpus::World& world() const noexcept { return world_; }
  const RunLayout& layout() const noexcept { return layout_; }
  const std::string& checksum() const noexcept { return checksum_; }

  // Datasets, manifest with counts and file digests, and a label re-check.
  nlohmann::json corpus();
  nlohmann::json train_sft(const std::optional<std::filesystem::path>& resume = std::nullopt);
  nlohmann::json train_rmt(const std::optional<std::filesystem::path>& resume = std::nullopt);
  nlohmann::json train_ppo(const std::optional<std::filesystem::path>& resume = std::nullopt);
  // Trains every (predictor, variant) recommender cell. A resume checkpoint
  // continues the cell it belongs to.
  nlohmann::json train_rec(const std::optional<std::filesystem::path>& resume = std::nullopt);

  // n generated JDs per CV from the sft or ppo checkpoint. Without a CV file
  // the CVs of every recommendation split are used. Malformed CV lines are
  // skipped and reported in the summary's "warnings".
  nlohmann::json generate(const std::string& source, std::size_t n,
                          const std::optional<std::filesystem::path>& cv_file = std::nullopt);

  nlohmann::json eval_quality();
  nlohmann::json eval_rec();
  nlohmann::json eval_coldstart();
  nlohmann::json eval_gen_sweep();

  // corpus, sft, rmt, ppo, generations from both sources, rec, then every
  // evaluation.
  nlohmann::json run_all();

 private:
  const corpus::Datasets& datasets();
  void require(const std::filesystem::path& artifact) const;
  void require_complete(const std::filesystem::path& ckpt, std::size_t expected, const std::string& key) const;
  // Append-only; every opening writes a start marker first.
  MetricsLog open_log(const std::string& name, bool resume) const;
  void write_report(const std::string& name, const nlohmann::json& report) const;
  recsys::RecModel load_rec_cell(recsys::PredictorKind predictor, const std::string& variant) const;
  std::vector<recsys::RecInstance> rec_split(const std::vector<corpus::RecExample>& split, const std::string& variant,
                                             std::size_t n);
  recsys::RecModel train_rec_cell(recsys::PredictorKind predictor, const std::string& variant, std::size_t n,
                                  const std::string& name, const recsys::RecProgress* resume);

  corpus::World world_;
  RunConfig config_;
  RunLayout layout_;
  std::string checksum_;
  std::optional<corpus::Datasets> datasets_;
  std::map<std::string, recsys::GenerationCache> caches_;
};

}  // namespace jobgen::pipeline
