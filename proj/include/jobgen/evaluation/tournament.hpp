#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "jobgen/evaluation/judge.hpp"

namespace jobgen::evaluation {

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

struct TournamentReport {
  double win_rate = 0.0;
  double tie_rate = 0.0;
  double lose_rate = 0.0;
  double advantage = 0.0;  // win_rate - lose_rate
  std::size_t count = 0;
  // Pairs whose two orderings disagreed and were therefore scored as ties.
  std::size_t order_disagreements = 0;
  std::vector<Verdict> outcomes;  // per CV, for model A
};

void to_json(nlohmann::json& j, const TournamentReport& r);

// Judges every (A_i, B_i) pair in both orders; an outcome stands only when
// the orders agree, otherwise it is a tie. Rejects unequal list lengths.
TournamentReport tournament(std::span<const corpus::CVDoc> cvs, std::span<const Tokens> outputs_a,
                            std::span<const Tokens> outputs_b, const JudgeFn& judge);

TournamentReport summarize(std::vector<Verdict> outcomes, std::size_t order_disagreements = 0);

struct RateIntervals {
  Interval win, tie, lose, advantage;
};

void to_json(nlohmann::json& j, const RateIntervals& r);

// Percentile intervals from resampling the per-CV outcomes with replacement.
RateIntervals bootstrap_intervals(std::span<const Verdict> outcomes, std::size_t resamples, double level,
                                  std::uint64_t seed);

}  // namespace jobgen::evaluation
