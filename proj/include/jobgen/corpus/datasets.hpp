#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "jobgen/corpus/world.hpp"

namespace jobgen::corpus {

struct DatasetConfig {
  std::size_t sft_pairs = 2000;
  double sft_holdout = 0.1;
  std::size_t rmt_triples = 3000;
  double rmt_holdout = 0.1;
  std::size_t rl_cvs = 500;
  std::size_t rec_seekers = 500;
  std::size_t interactions_per_seeker = 4;
  double rec_val_fraction = 0.1;
  double rec_test_fraction = 0.1;
  // Share of recommendation seekers whose interactions all land in test.
  double cold_fraction = 0.1;
  std::size_t eval_cvs = 200;
  double label_noise = 0.0;
  std::size_t max_seekers = 20000;

  std::size_t total_seekers() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const DatasetConfig& c);
void from_json(const nlohmann::json& j, DatasetConfig& c);

struct SftExample {
  CVDoc cv;
  JDDoc jd;
};

struct RmtExample {
  CVDoc cv;
  JDDoc positive;
  JDDoc negative;
};

struct InteractionRecord {
  std::uint64_t seeker_id = 0;
  std::uint64_t job_id = 0;
  int label = 0;
};

struct RecExample {
  CVDoc cv;
  JDDoc jd;
  int label = 0;
  std::uint64_t time = 0;
  bool cold = false;  // seeker absent from the training split

  InteractionRecord record() const { return {cv.seeker_id, jd.job_id, label}; }
};

struct Datasets {
  std::vector<SftExample> sft_train, sft_test;
  std::vector<RmtExample> rmt_train, rmt_test;
  std::vector<CVDoc> rl_cvs;
  std::vector<RecExample> rec_train, rec_val, rec_test;
  std::vector<CVDoc> eval_cvs;
};

// Pure function of (world, config, seed). Every set draws from its own seeker
// id range, so no seeker appears in two sets.
Datasets make_datasets(const World& world, const DatasetConfig& config, std::uint64_t seed);

void save_world(const std::filesystem::path& dir, const World& world);
World load_world(const std::filesystem::path& dir);
void save_datasets(const std::filesystem::path& dir, const Datasets& data);
Datasets load_datasets(const std::filesystem::path& dir);

}  // namespace jobgen::corpus
