#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "jobgen/corpus/world.hpp"

namespace jobgen::evaluation {

enum class Verdict { win, tie, lose };

std::string to_string(Verdict v);
// win <-> lose, tie unchanged.
Verdict flip(Verdict v);

struct RubricConfig {
  double detail_weight = 1.0 / 3.0;
  double relevance_weight = 1.0 / 3.0;
  double conciseness_weight = 1.0 / 3.0;
  // Tie band as a fraction of the weighted-sum range (the sum of weights).
  double tie_fraction = 0.05;
  // JD lengths (tokens before EOS) inside [min_length, max_length] carry no
  // length penalty; outside, the penalty grows by 1/length_tolerance per token.
  std::size_t min_length = 8;
  std::size_t max_length = 28;
  double length_tolerance = 10.0;

  void validate() const;
  double tie_threshold() const;
};

void to_json(nlohmann::json& j, const RubricConfig& c);
void from_json(const nlohmann::json& j, RubricConfig& c);

struct RubricScores {
  double detail = 0.0;       // share of responsibilities, requirements, pay band present
  double relevance = 0.0;    // share of the CV's skills listed as requirements
  double conciseness = 0.0;  // 1 minus length and repetition penalties, floored at 0
};

struct JudgeVerdict {
  Verdict verdict = Verdict::tie;
  RubricScores a;
  RubricScores b;
};

void to_json(nlohmann::json& j, const JudgeVerdict& v);

RubricScores rubric_scores(const corpus::World& world, const corpus::CVDoc& cv, std::span<const TokenId> jd,
                           const RubricConfig& config);
double weighted_score(const RubricScores& s, const RubricConfig& config);

// Deterministic rubric comparison of two JDs written for the same CV. Both
// JDs must be nonempty.
JudgeVerdict judge_pair(const corpus::World& world, const corpus::CVDoc& cv, std::span<const TokenId> jd_a,
                        std::span<const TokenId> jd_b, const RubricConfig& config);

// Any judge with the verdict contract of judge_pair: the verdict is for jd_a.
using JudgeFn = std::function<Verdict(const corpus::CVDoc& cv, std::span<const TokenId> jd_a,
                                      std::span<const TokenId> jd_b)>;

JudgeFn rubric_judge(const corpus::World& world, RubricConfig config = {});

// Text request for an external judge. The reply is expected to start with
// "A", "B" or "TIE"; parse_judge_reply maps it to a verdict for jd_a.
std::string judge_request(const corpus::World& world, const corpus::CVDoc& cv, std::span<const TokenId> jd_a,
                          std::span<const TokenId> jd_b);
Verdict parse_judge_reply(const std::string& reply);

}  // namespace jobgen::evaluation
