#include "jobgen/evaluation/judge.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "jobgen/common/error.hpp"

namespace jobgen::evaluation {

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::win:
      return "win";
    case Verdict::lose:
      return "lose";
    case Verdict::tie:
      break;
  }
  return "tie";
}

Verdict flip(Verdict v) {
  if (v == Verdict::win) return Verdict::lose;
  if (v == Verdict::lose) return Verdict::win;
  return Verdict::tie;
}

void RubricConfig::validate() const {
  for (double w : {detail_weight, relevance_weight, conciseness_weight}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("rubric: weights must be finite and non-negative");
  }
  if (!(detail_weight + relevance_weight + conciseness_weight > 0.0)) {
    throw ConfigError("rubric: at least one weight must be positive");
  }
  if (!(tie_fraction >= 0.0 && tie_fraction < 1.0)) throw ConfigError("rubric: tie_fraction must lie in [0, 1)");
  if (min_length > max_length) throw ConfigError("rubric: min_length exceeds max_length");
  if (!(length_tolerance > 0.0)) throw ConfigError("rubric: length_tolerance must be positive");
}

double RubricConfig::tie_threshold() const {
  return tie_fraction * (detail_weight + relevance_weight + conciseness_weight);
}

void to_json(nlohmann::json& j, const RubricConfig& c) {
  j = nlohmann::json{{"detail_weight", c.detail_weight},       {"relevance_weight", c.relevance_weight},
                     {"conciseness_weight", c.conciseness_weight}, {"tie_fraction", c.tie_fraction},
                     {"min_length", c.min_length},             {"max_length", c.max_length},
                     {"length_tolerance", c.length_tolerance}};
}

void from_json(const nlohmann::json& j, RubricConfig& c) {
  RubricConfig d;
  c.detail_weight = j.value("detail_weight", d.detail_weight);
  c.relevance_weight = j.value("relevance_weight", d.relevance_weight);
  c.conciseness_weight = j.value("conciseness_weight", d.conciseness_weight);
  c.tie_fraction = j.value("tie_fraction", d.tie_fraction);
  c.min_length = j.value("min_length", d.min_length);
  c.max_length = j.value("max_length", d.max_length);
  c.length_tolerance = j.value("length_tolerance", d.length_tolerance);
}

namespace {

nlohmann::json scores_json(const RubricScores& s) {
  return {{"detail", s.detail}, {"relevance", s.relevance}, {"conciseness", s.conciseness}};
}

}  // namespace

void to_json(nlohmann::json& j, const JudgeVerdict& v) {
  j = nlohmann::json{{"verdict", to_string(v.verdict)}, {"a", scores_json(v.a)}, {"b", scores_json(v.b)}};
}

RubricScores rubric_scores(const corpus::World& world, const corpus::CVDoc& cv, std::span<const TokenId> jd,
                           const RubricConfig& config) {
  const auto parsed = world.parse_jd(jd);
  RubricScores s;
  s.detail = (static_cast<double>(parsed.has_responsibility) + static_cast<double>(parsed.has_requirements) +
              static_cast<double>(parsed.has_pay)) /
             3.0;
  if (!cv.skills.empty()) {
    std::size_t covered = 0;
    for (std::size_t skill : cv.skills) {
      covered += std::find(parsed.required.begin(), parsed.required.end(), skill) != parsed.required.end() ? 1 : 0;
    }
    s.relevance = static_cast<double>(covered) / static_cast<double>(cv.skills.size());
  }
  std::size_t outside = 0;
  if (parsed.length < config.min_length) outside = config.min_length - parsed.length;
  if (parsed.length > config.max_length) outside = parsed.length - config.max_length;
  const double length_penalty = std::min(1.0, static_cast<double>(outside) / config.length_tolerance);
  const double repetition = parsed.length ? static_cast<double>(parsed.repeats) / static_cast<double>(parsed.length) : 0.0;
  s.conciseness = std::max(0.0, 1.0 - length_penalty - repetition);
  return s;
}

double weighted_score(const RubricScores& s, const RubricConfig& config) {
  return config.detail_weight * s.detail + config.relevance_weight * s.relevance +
         config.conciseness_weight * s.conciseness;
}

JudgeVerdict judge_pair(const corpus::World& world, const corpus::CVDoc& cv, std::span<const TokenId> jd_a,
                        std::span<const TokenId> jd_b, const RubricConfig& config) {
  if (jd_a.empty() || jd_b.empty()) throw ConfigError("judge_pair: both JDs must be nonempty");
  JudgeVerdict v;
  v.a = rubric_scores(world, cv, jd_a, config);
  v.b = rubric_scores(world, cv, jd_b, config);
  const double diff = weighted_score(v.a, config) - weighted_score(v.b, config);
  const double delta = config.tie_threshold();
  v.verdict = diff > delta ? Verdict::win : diff < -delta ? Verdict::lose : Verdict::tie;
  return v;
}

JudgeFn rubric_judge(const corpus::World& world, RubricConfig config) {
  config.validate();
  return [&world, config](const corpus::CVDoc& cv, std::span<const TokenId> a, std::span<const TokenId> b) {
    return judge_pair(world, cv, a, b, config).verdict;
  };
}

std::string judge_request(const corpus::World& world, const corpus::CVDoc& cv, std::span<const TokenId> jd_a,
                          std::span<const TokenId> jd_b) {
  const auto& v = world.vocabulary();
  std::string out;
  out += "Two job descriptions were written for the candidate below.\n";
  out += "Compare them on detail (duties, requirements and pay are all stated),\n";
  out += "relevance (the requirements use the candidate's skills) and\n";
  out += "conciseness (no padding or repeated words).\n";
  out += "Reply with A, B or TIE on the first line.\n\n";
  out += "Candidate: " + v.decode(cv.tokens) + "\n";
  out += "A: " + v.decode(jd_a) + "\n";
  out += "B: " + v.decode(jd_b) + "\n";
  return out;
}

Verdict parse_judge_reply(const std::string& reply) {
  std::string first;
  for (char c : reply) {
    if (c == '\n') break;
    if (!std::isspace(static_cast<unsigned char>(c))) first.push_back(static_cast<char>(std::toupper(c)));
  }
  if (first == "A") return Verdict::win;
  if (first == "B") return Verdict::lose;
  if (first == "TIE") return Verdict::tie;
  throw ConfigError("judge reply: expected A, B or TIE, got '" + first + "'");
}

}  // namespace jobgen::evaluation
