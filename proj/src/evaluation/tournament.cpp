#include "jobgen/evaluation/tournament.hpp"

#include <algorithm>
#include <cmath>

#include "jobgen/common/error.hpp"
#include "jobgen/common/rng.hpp"

namespace jobgen::evaluation {

void to_json(nlohmann::json& j, const TournamentReport& r) {
  j = nlohmann::json{{"win_rate", r.win_rate},   {"tie_rate", r.tie_rate},
                     {"lose_rate", r.lose_rate}, {"advantage", r.advantage},
                     {"count", r.count},         {"order_disagreements", r.order_disagreements}};
}

TournamentReport summarize(std::vector<Verdict> outcomes, std::size_t order_disagreements) {
  if (outcomes.empty()) throw ConfigError("tournament: no outcomes");
  TournamentReport r;
  std::size_t win = 0, lose = 0;
  for (Verdict v : outcomes) {
    win += v == Verdict::win ? 1 : 0;
    lose += v == Verdict::lose ? 1 : 0;
  }
  const double n = static_cast<double>(outcomes.size());
  r.count = outcomes.size();
  r.win_rate = static_cast<double>(win) / n;
  r.lose_rate = static_cast<double>(lose) / n;
  r.tie_rate = static_cast<double>(outcomes.size() - win - lose) / n;
  r.advantage = r.win_rate - r.lose_rate;
  r.order_disagreements = order_disagreements;
  r.outcomes = std::move(outcomes);
  return r;
}

TournamentReport tournament(std::span<const corpus::CVDoc> cvs, std::span<const Tokens> outputs_a,
                            std::span<const Tokens> outputs_b, const JudgeFn& judge) {
  if (outputs_a.size() != outputs_b.size() || outputs_a.size() != cvs.size()) {
    throw ConfigError("tournament: " + std::to_string(cvs.size()) + " CVs, " + std::to_string(outputs_a.size()) +
                      " outputs from A, " + std::to_string(outputs_b.size()) + " from B");
  }
  std::vector<Verdict> outcomes;
  std::size_t disagreements = 0;
  for (std::size_t i = 0; i < cvs.size(); ++i) {
    const Verdict forward = judge(cvs[i], outputs_a[i], outputs_b[i]);
    const Verdict backward = flip(judge(cvs[i], outputs_b[i], outputs_a[i]));
    if (forward == backward) {
      outcomes.push_back(forward);
    } else {
      outcomes.push_back(Verdict::tie);
      ++disagreements;
    }
  }
  return summarize(std::move(outcomes), disagreements);
}

void to_json(nlohmann::json& j, const RateIntervals& r) {
  auto iv = [](const Interval& i) { return nlohmann::json::array({i.low, i.high}); };
  j = nlohmann::json{{"win", iv(r.win)}, {"tie", iv(r.tie)}, {"lose", iv(r.lose)}, {"advantage", iv(r.advantage)}};
}

RateIntervals bootstrap_intervals(std::span<const Verdict> outcomes, std::size_t resamples, double level,
                                  std::uint64_t seed) {
  if (outcomes.empty()) throw ConfigError("bootstrap_intervals: no outcomes");
  if (resamples == 0) throw ConfigError("bootstrap_intervals: resamples must be positive");
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("bootstrap_intervals: level must lie in (0, 1)");
  Rng rng(seed);
  std::vector<double> win, tie, lose, adv;
  const double n = static_cast<double>(outcomes.size());
  for (std::size_t r = 0; r < resamples; ++r) {
    std::size_t w = 0, l = 0;
    for (std::size_t k = 0; k < outcomes.size(); ++k) {
      const Verdict v = outcomes[rng.below(outcomes.size())];
      w += v == Verdict::win ? 1 : 0;
      l += v == Verdict::lose ? 1 : 0;
    }
    win.push_back(static_cast<double>(w) / n);
    lose.push_back(static_cast<double>(l) / n);
    tie.push_back(static_cast<double>(outcomes.size() - w - l) / n);
    adv.push_back(win.back() - lose.back());
  }
  const double tail = (1.0 - level) / 2.0;
  auto interval = [&](std::vector<double>& xs) {
    std::sort(xs.begin(), xs.end());
    const double last = static_cast<double>(xs.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(tail * last));
    const auto hi = static_cast<std::size_t>(std::ceil((1.0 - tail) * last));
    return Interval{xs[lo], xs[std::min(hi, xs.size() - 1)]};
  };
  return {interval(win), interval(tie), interval(lose), interval(adv)};
}

}  // namespace jobgen::evaluation
