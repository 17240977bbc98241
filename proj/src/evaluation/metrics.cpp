#include "jobgen/evaluation/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "jobgen/common/error.hpp"

namespace jobgen::evaluation {

namespace {

void check_lengths(std::size_t scores, std::size_t labels, const char* what) {
  if (scores != labels) {
    throw ConfigError(std::string(what) + ": " + std::to_string(scores) + " scores vs " + std::to_string(labels) +
                      " labels");
  }
}

}  // namespace

double auc(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores.size(), labels.size(), "auc");
  std::uint64_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw ConfigError("auc: labels must be 0 or 1");
    if (std::isnan(scores[i])) throw ConfigError("auc: NaN score at index " + std::to_string(i));
    (labels[i] ? pos : neg) += 1;
  }
  if (pos == 0 || neg == 0) {
    throw ConfigError("auc: need both classes, got " + std::to_string(pos) + " positives and " + std::to_string(neg) +
                      " negatives");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the count of correctly ordered pairs plus tied pairs, kept integral
  // so the result is a single rounding of an exact ratio.
  std::uint64_t twice = 0, neg_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t group_pos = 0, group_neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? group_pos : group_neg) += 1;
      ++j;
    }
    twice += group_pos * (2 * neg_below + group_neg);
    neg_below += group_neg;
    i = j;
  }
  return static_cast<double>(twice) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

double logloss(std::span<const double> probabilities, std::span<const int> labels) {
  check_lengths(probabilities.size(), labels.size(), "logloss");
  if (labels.empty()) throw ConfigError("logloss: no examples");
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw ConfigError("logloss: labels must be 0 or 1");
    const double p = std::clamp(probabilities[i], kLoglossClamp, 1.0 - kLoglossClamp);
    total -= labels[i] ? std::log(p) : std::log1p(-p);
  }
  return total / static_cast<double>(labels.size());
}

void to_json(nlohmann::json& j, const RecMetrics& m) {
  j = nlohmann::json{{"auc", m.auc}, {"logloss", m.logloss}, {"count", m.count}};
}

RecMetrics rec_metrics(std::span<const double> probabilities, std::span<const int> labels) {
  return {auc(probabilities, labels), logloss(probabilities, labels), labels.size()};
}

void to_json(nlohmann::json& j, const ColdStartReport& r) { j = nlohmann::json{{"full", r.full}, {"cold", r.cold}}; }

ColdStartReport cold_start_slice(std::span<const double> probabilities, std::span<const corpus::RecExample> test) {
  check_lengths(probabilities.size(), test.size(), "cold_start_slice");
  std::vector<double> all_p, cold_p;
  std::vector<int> all_z, cold_z;
  for (std::size_t i = 0; i < test.size(); ++i) {
    all_p.push_back(probabilities[i]);
    all_z.push_back(test[i].label);
    if (test[i].cold) {
      cold_p.push_back(probabilities[i]);
      cold_z.push_back(test[i].label);
    }
  }
  if (cold_p.empty()) throw ConfigError("cold_start_slice: no cold-start examples in the test split");
  return {rec_metrics(all_p, all_z), rec_metrics(cold_p, cold_z)};
}

std::size_t cold_seekers_in_train(std::span<const corpus::RecExample> train, std::span<const corpus::RecExample> test) {
  std::set<std::uint64_t> seen;
  for (const auto& ex : train) seen.insert(ex.cv.seeker_id);
  std::set<std::uint64_t> leaked;
  for (const auto& ex : test) {
    if (ex.cold && seen.count(ex.cv.seeker_id)) leaked.insert(ex.cv.seeker_id);
  }
  return leaked.size();
}

}  // namespace jobgen::evaluation
