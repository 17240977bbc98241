#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "jobgen/common/error.hpp"
#include "jobgen/common/rng.hpp"
#include "jobgen/evaluation/metrics.hpp"
#include "jobgen/evaluation/tournament.hpp"

using namespace jobgen;
using namespace jobgen::evaluation;

namespace {

const corpus::World& world() {
  static const corpus::World w(corpus::SkillOntology::standard());
  return w;
}

// Exhaustive pair count: correct pairs count 2, ties 1, over 2 * P * N.
double auc_oracle(const std::vector<double>& s, const std::vector<int>& z) {
  std::uint64_t twice = 0, pos = 0, neg = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    (z[i] ? pos : neg) += 1;
    if (!z[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (z[j]) continue;
      twice += s[i] > s[j] ? 2 : s[i] == s[j] ? 1 : 0;
    }
  }
  return static_cast<double>(twice) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

Tokens jd_tokens(const std::string& text) { return world().vocabulary().encode(text); }

corpus::CVDoc cv_with(std::vector<std::string> skills, int level = 1) {
  corpus::CVDoc cv;
  cv.level = level;
  for (const auto& s : skills) {
    const auto& all = world().ontology().skills;
    cv.skills.push_back(static_cast<std::size_t>(std::find(all.begin(), all.end(), s) - all.begin()));
  }
  cv.tokens = world().render_cv(cv);
  return cv;
}

}  // namespace

TEST_CASE("auc examples") {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<int> z{0, 0, 1, 1};
  CHECK(auc(s, z) == 0.75);
  const std::vector<double> sep{0.1, 0.2, 0.8, 0.9};
  CHECK(auc(sep, z) == 1.0);
  const std::vector<double> flat{0.5, 0.5, 0.5, 0.5};
  CHECK(auc(flat, z) == 0.5);
  const std::vector<int> one_class{1, 1, 1, 1};
  CHECK_THROWS_AS((void)auc(s, one_class), ConfigError);
  const std::vector<int> bad{0, 2, 1, 1};
  CHECK_THROWS_AS((void)auc(s, bad), ConfigError);
  CHECK_THROWS_AS((void)auc(std::span<const double>(s).first(3), z), ConfigError);
}

TEST_CASE("auc equals the exhaustive pair-count oracle") {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(2000 - 1);
    std::vector<double> s(n);
    std::vector<int> z(n);
    // Coarse scores force many ties.
    const bool coarse = trial % 2 == 0;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = coarse ? static_cast<double>(rng.below(7)) : rng.uniform();
      z[i] = rng.bernoulli(0.3) ? 1 : 0;
    }
    z[0] = 1;
    z[1] = 0;
    CAPTURE(n);
    CHECK(auc(s, z) == auc_oracle(s, z));
  }
}

TEST_CASE("auc of uninformative scores is near one half") {
  Rng rng(2);
  std::vector<double> s(10'000);
  std::vector<int> z(10'000);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = rng.uniform();
    z[i] = rng.bernoulli(0.5) ? 1 : 0;
  }
  CHECK(std::abs(auc(s, z) - 0.5) <= 0.02);
}

TEST_CASE("auc depends only on the ranking") {
  Rng rng(3);
  std::vector<double> raw(300), squashed(300);
  std::vector<int> z(300);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    raw[i] = rng.normal(0.0, 3.0);
    squashed[i] = 1.0 / (1.0 + std::exp(-raw[i]));
    z[i] = rng.bernoulli(1.0 / (1.0 + std::exp(-raw[i]))) ? 1 : 0;
  }
  CHECK(auc(raw, z) == auc(squashed, z));
}

TEST_CASE("logloss examples") {
  const std::vector<double> half{0.5, 0.5, 0.5};
  const std::vector<int> z{1, 0, 1};
  CHECK(logloss(half, z) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const std::vector<double> p{0.9};
  const std::vector<int> pos{1};
  // -ln 0.9 to 20 digits.
  CHECK(std::abs(logloss(p, pos) - 0.10536051565782630123) < 1e-12);
  const std::vector<double> perfect{1.0, 0.0};
  const std::vector<int> pz{1, 0};
  CHECK(logloss(perfect, pz) <= 1e-6);
  CHECK(logloss(perfect, pz) > 0.0);
  const std::vector<int> wrong{0, 1};
  CHECK(std::isfinite(logloss(perfect, wrong)));
}

TEST_CASE("logloss matches direct evaluation") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> p(100);
    std::vector<int> z(100);
    long double direct = 0.0L;
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = 0.001 + 0.998 * rng.uniform();
      z[i] = rng.bernoulli(0.4) ? 1 : 0;
      const long double q = p[i];
      direct -= z[i] ? std::log(q) : std::log(1.0L - q);
    }
    direct /= 100.0L;
    CHECK(std::abs(logloss(p, z) - static_cast<double>(direct)) < 1e-12);
  }
}

TEST_CASE("constant logloss is minimized at the base rate") {
  std::vector<int> z(200, 0);
  for (std::size_t i = 0; i < 70; ++i) z[i] = 1;
  auto at = [&](double c) {
    const std::vector<double> p(z.size(), c);
    return logloss(p, z);
  };
  double best_c = 0.0, best = 1e9;
  for (int k = 1; k < 1000; ++k) {
    const double c = k / 1000.0;
    if (at(c) < best) {
      best = at(c);
      best_c = c;
    }
  }
  CHECK(best_c == doctest::Approx(0.35));
}

TEST_CASE("judge is reflexive and dominance wins") {
  const RubricConfig cfg;
  const auto cv = cv_with({"sql", "python", "statistics"});
  const Tokens a = jd_tokens("data_analyst duties build dashboards requires sql python statistics level_mid pay_band_a <eos>");
  const Tokens b = jd_tokens("data_analyst duties build dashboards requires tableau spark figma level_mid pay_band_a <eos>");
  REQUIRE(world().parse_jd(a).length == world().parse_jd(b).length);
  const auto same = judge_pair(world(), cv, a, a, cfg);
  CHECK(same.verdict == Verdict::tie);
  CHECK(same.a.detail == same.b.detail);
  CHECK(same.a.relevance == same.b.relevance);
  CHECK(same.a.conciseness == same.b.conciseness);
  const auto v = judge_pair(world(), cv, a, b, cfg);
  CHECK(v.a.relevance == 1.0);
  CHECK(v.b.relevance == 0.0);
  CHECK(v.verdict == Verdict::win);
  CHECK(judge_pair(world(), cv, b, a, cfg).verdict == Verdict::lose);
  CHECK_THROWS_AS((void)judge_pair(world(), cv, Tokens{}, a, cfg), ConfigError);
}

TEST_CASE("judge sub-scores") {
  const RubricConfig cfg;
  const auto cv = cv_with({"sql", "python", "statistics", "figma"});
  const auto s = rubric_scores(
      world(), cv, jd_tokens("data_analyst duties build dashboards requires sql python level_mid <eos>"), cfg);
  CHECK(s.detail == doctest::Approx(2.0 / 3.0));
  CHECK(s.relevance == 0.5);
  CHECK(s.conciseness == 1.0);
  // Four repeats over eight tokens, which is inside the length band.
  const auto r = rubric_scores(world(), cv, jd_tokens("requires sql sql sql sql python python data_analyst <eos>"), cfg);
  CHECK(r.detail == doctest::Approx(1.0 / 3.0));
  CHECK(r.conciseness == doctest::Approx(1.0 - 0.0 - 4.0 / 8.0));
  const auto shorter = rubric_scores(world(), cv, jd_tokens("requires sql <eos>"), cfg);
  CHECK(shorter.conciseness == doctest::Approx(1.0 - 6.0 / 10.0));
}

TEST_CASE("judge antisymmetry over a 500-pair sweep") {
  const RubricConfig cfg;
  Rng rng(5);
  const auto& vocab = world().vocabulary();
  std::size_t decisive = 0;
  for (int i = 0; i < 500; ++i) {
    const auto cv = world().sample_cv(rng, static_cast<std::uint64_t>(i));
    auto random_jd = [&] {
      if (rng.bernoulli(0.5)) return world().sample_jd_for_cv(cv, rng.bernoulli(0.5) ? 1 : 0, rng, 0).tokens;
      Tokens t;
      const std::size_t len = 1 + rng.below(30);
      for (std::size_t k = 0; k < len; ++k) t.push_back(static_cast<TokenId>(3 + rng.below(vocab.size() - 3)));
      return t;
    };
    const Tokens a = random_jd(), b = random_jd();
    const Verdict ab = judge_pair(world(), cv, a, b, cfg).verdict;
    const Verdict ba = judge_pair(world(), cv, b, a, cfg).verdict;
    CHECK(ab == flip(ba));
    CHECK(judge_pair(world(), cv, a, a, cfg).verdict == Verdict::tie);
    decisive += ab != Verdict::tie ? 1 : 0;
  }
  CHECK(decisive > 100);
}

TEST_CASE("tournament rates") {
  Rng rng(6);
  std::vector<corpus::CVDoc> cvs;
  std::vector<Tokens> a, b;
  for (int i = 0; i < 200; ++i) {
    cvs.push_back(world().sample_cv(rng, static_cast<std::uint64_t>(i)));
    a.push_back(world().sample_jd_for_cv(cvs.back(), 1, rng, 0).tokens);
    b.push_back(world().sample_jd_for_cv(cvs.back(), 0, rng, 0).tokens);
  }
  const auto judge = rubric_judge(world());
  const auto self = tournament(cvs, a, a, judge);
  CHECK(self.win_rate == 0.0);
  CHECK(self.lose_rate == 0.0);
  CHECK(self.tie_rate == 1.0);
  CHECK(self.advantage == 0.0);

  const auto r = tournament(cvs, a, b, judge);
  CHECK(std::abs(r.win_rate + r.tie_rate + r.lose_rate - 1.0) <= 1e-9);
  CHECK(r.advantage == r.win_rate - r.lose_rate);
  CHECK(r.count == 200);
  // The rubric is antisymmetric, so both orders always agree.
  CHECK(r.order_disagreements == 0);
  const auto rev = tournament(cvs, b, a, judge);
  CHECK(rev.win_rate == r.lose_rate);
  CHECK(rev.advantage == -r.advantage);
  CHECK_THROWS_AS((void)tournament(cvs, a, std::span<const Tokens>(b).first(10), judge), ConfigError);
}

TEST_CASE("tournament turns order-dependent verdicts into ties") {
  // A judge that always prefers the first argument.
  const JudgeFn first_wins = [](const corpus::CVDoc&, std::span<const TokenId>, std::span<const TokenId>) {
    return Verdict::win;
  };
  std::vector<corpus::CVDoc> cvs(5);
  std::vector<Tokens> a(5, Tokens{4}), b(5, Tokens{5});
  const auto r = tournament(cvs, a, b, first_wins);
  CHECK(r.tie_rate == 1.0);
  CHECK(r.order_disagreements == 5);
}

TEST_CASE("bootstrap intervals bracket the observed rates") {
  std::vector<Verdict> outcomes;
  for (int i = 0; i < 60; ++i) outcomes.push_back(Verdict::win);
  for (int i = 0; i < 25; ++i) outcomes.push_back(Verdict::tie);
  for (int i = 0; i < 15; ++i) outcomes.push_back(Verdict::lose);
  const auto r = summarize(outcomes);
  const auto iv = bootstrap_intervals(outcomes, 2000, 0.95, 7);
  CHECK(iv.win.low <= r.win_rate);
  CHECK(iv.win.high >= r.win_rate);
  CHECK(iv.advantage.low <= r.advantage);
  CHECK(iv.advantage.high >= r.advantage);
  CHECK(iv.advantage.low > 0.0);
  CHECK(bootstrap_intervals(outcomes, 2000, 0.95, 7).win.low == iv.win.low);
  const std::vector<Verdict> ties(10, Verdict::tie);
  const auto flat = bootstrap_intervals(ties, 100, 0.9, 1);
  CHECK(flat.tie.low == 1.0);
  CHECK(flat.advantage.high == 0.0);
}

TEST_CASE("external judge replies") {
  CHECK(parse_judge_reply("A\nbecause") == Verdict::win);
  CHECK(parse_judge_reply(" b ") == Verdict::lose);
  CHECK(parse_judge_reply("Tie") == Verdict::tie);
  CHECK_THROWS_AS((void)parse_judge_reply("maybe"), ConfigError);
  const auto cv = cv_with({"sql", "python"});
  const auto text = judge_request(world(), cv, jd_tokens("data_analyst <eos>"), jd_tokens("devops_engineer <eos>"));
  CHECK(text.find("exp_mid sql python") != std::string::npos);
  CHECK(text.find("A: data_analyst") != std::string::npos);
  CHECK(text.find("B: devops_engineer") != std::string::npos);
}

TEST_CASE("cold-start slice") {
  Rng rng(8);
  std::vector<corpus::RecExample> test;
  std::vector<double> p;
  for (int i = 0; i < 40; ++i) {
    corpus::RecExample ex;
    ex.cv.seeker_id = static_cast<std::uint64_t>(i / 2);
    ex.label = i % 2;
    ex.cold = i < 10;
    test.push_back(ex);
    p.push_back(rng.uniform());
  }
  const auto r = cold_start_slice(p, test);
  CHECK(r.full.count == 40);
  CHECK(r.cold.count == 10);
  std::vector<double> cold_p(p.begin(), p.begin() + 10);
  std::vector<int> cold_z;
  for (int i = 0; i < 10; ++i) cold_z.push_back(i % 2);
  CHECK(r.cold.auc == auc(cold_p, cold_z));
  CHECK(r.cold.logloss == logloss(cold_p, cold_z));

  auto all_cold = test;
  for (auto& ex : all_cold) ex.cold = true;
  const auto same = cold_start_slice(p, all_cold);
  CHECK(same.cold.auc == same.full.auc);
  CHECK(same.cold.logloss == same.full.logloss);

  auto none = test;
  for (auto& ex : none) ex.cold = false;
  CHECK_THROWS_AS((void)cold_start_slice(p, none), ConfigError);

  std::vector<corpus::RecExample> train(1);
  train[0].cv.seeker_id = 100;
  CHECK(cold_seekers_in_train(train, test) == 0);
  train[0].cv.seeker_id = 2;
  CHECK(cold_seekers_in_train(train, test) == 1);
}
