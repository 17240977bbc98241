#pragma once

#include <span>
#include <vector>

#include <json.hpp>

#include "jobgen/corpus/datasets.hpp"

namespace jobgen::evaluation {

// Probability that a random positive outranks a random negative, ties
// counted half. Rejects mismatched lengths, labels other than 0/1 and
// single-class input.
double auc(std::span<const double> scores, std::span<const int> labels);

inline constexpr double kLoglossClamp = 1e-7;

// Mean binary cross-entropy with probabilities clamped to
// [kLoglossClamp, 1 - kLoglossClamp].
double logloss(std::span<const double> probabilities, std::span<const int> labels);

struct RecMetrics {
  double auc = 0.0;
  double logloss = 0.0;
  std::size_t count = 0;
};

void to_json(nlohmann::json& j, const RecMetrics& m);

RecMetrics rec_metrics(std::span<const double> probabilities, std::span<const int> labels);

struct ColdStartReport {
  RecMetrics full;
  RecMetrics cold;
};

void to_json(nlohmann::json& j, const ColdStartReport& r);

// Metrics on the whole test split and on the examples flagged cold.
// probabilities[i] belongs to test[i]. An empty cold slice is rejected.
ColdStartReport cold_start_slice(std::span<const double> probabilities, std::span<const corpus::RecExample> test);

// Number of distinct cold-flagged seekers in test that also occur in train.
std::size_t cold_seekers_in_train(std::span<const corpus::RecExample> train, std::span<const corpus::RecExample> test);

}  // namespace jobgen::evaluation
