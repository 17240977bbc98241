#include "jobgen/corpus/world.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "jobgen/common/error.hpp"

namespace jobgen::corpus {

void WorldConfig::validate(const SkillOntology& ontology) const {
  if (min_skills < 1 || max_skills < min_skills) throw ConfigError("world: invalid CV skill bounds");
  if (min_home_skills > min_skills) throw ConfigError("world: min_home_skills exceeds min_skills");
  if (min_required < 1 || max_required < min_required) throw ConfigError("world: invalid requirement bounds");
  for (const auto& f : ontology.families) {
    if (f.skills.size() < max_required) {
      throw ConfigError("world: family '" + f.name + "' has fewer skills than max_required");
    }
    if (f.skills.size() < min_home_skills) {
      throw ConfigError("world: family '" + f.name + "' has fewer skills than min_home_skills");
    }
  }
  if (max_skills > ontology.skills.size()) throw ConfigError("world: max_skills exceeds the ontology");
  if (max_fillers > ontology.fillers.size()) throw ConfigError("world: max_fillers exceeds the filler list");
  if (!(match_threshold > 0.0 && match_threshold <= 1.0)) throw ConfigError("world: match_threshold must lie in (0, 1]");
  if (!(hard_negative_rate >= 0.0 && hard_negative_rate <= 1.0)) {
    throw ConfigError("world: hard_negative_rate must lie in [0, 1]");
  }
  if (max_draws < 1) throw ConfigError("world: max_draws must be positive");
}

void to_json(nlohmann::json& j, const WorldConfig& c) {
  j = nlohmann::json{{"min_skills", c.min_skills},
                     {"max_skills", c.max_skills},
                     {"min_home_skills", c.min_home_skills},
                     {"max_fillers", c.max_fillers},
                     {"min_required", c.min_required},
                     {"max_required", c.max_required},
                     {"match_threshold", c.match_threshold},
                     {"hard_negative_rate", c.hard_negative_rate},
                     {"max_draws", c.max_draws}};
}

void from_json(const nlohmann::json& j, WorldConfig& c) {
  WorldConfig d;
  c.min_skills = j.value("min_skills", d.min_skills);
  c.max_skills = j.value("max_skills", d.max_skills);
  c.min_home_skills = j.value("min_home_skills", d.min_home_skills);
  c.max_fillers = j.value("max_fillers", d.max_fillers);
  c.min_required = j.value("min_required", d.min_required);
  c.max_required = j.value("max_required", d.max_required);
  c.match_threshold = j.value("match_threshold", d.match_threshold);
  c.hard_negative_rate = j.value("hard_negative_rate", d.hard_negative_rate);
  c.max_draws = j.value("max_draws", d.max_draws);
}

void to_json(nlohmann::json& j, const CVDoc& d) {
  j = nlohmann::json{{"seeker_id", d.seeker_id}, {"level", d.level},   {"skills", d.skills},
                     {"fillers", d.fillers},     {"tokens", d.tokens}};
}

void from_json(const nlohmann::json& j, CVDoc& d) {
  j.at("seeker_id").get_to(d.seeker_id);
  j.at("level").get_to(d.level);
  j.at("skills").get_to(d.skills);
  j.at("fillers").get_to(d.fillers);
  j.at("tokens").get_to(d.tokens);
}

void to_json(nlohmann::json& j, const JDDoc& d) {
  j = nlohmann::json{{"job_id", d.job_id},
                     {"family", d.family},
                     {"required", d.required},
                     {"responsibility", d.responsibility},
                     {"pay_band", d.pay_band},
                     {"tokens", d.tokens}};
}

void from_json(const nlohmann::json& j, JDDoc& d) {
  j.at("job_id").get_to(d.job_id);
  j.at("family").get_to(d.family);
  j.at("required").get_to(d.required);
  j.at("responsibility").get_to(d.responsibility);
  j.at("pay_band").get_to(d.pay_band);
  j.at("tokens").get_to(d.tokens);
}

void PromptTemplate::validate() const {
  if (split_words(role).empty()) throw ConfigError("prompt template: role segment is empty");
  if (split_words(instruction).empty()) throw ConfigError("prompt template: instruction segment is empty");
  const auto pos = input.find("{cv}");
  if (pos == std::string::npos) throw ConfigError("prompt template: input segment lacks the {cv} slot");
  if (input.find("{cv}", pos + 1) != std::string::npos) {
    throw ConfigError("prompt template: input segment repeats the {cv} slot");
  }
}

std::vector<std::string> PromptTemplate::words() const {
  std::vector<std::string> out;
  for (const auto* text : {&role, &instruction, &input, &output_marker}) {
    for (auto& w : split_words(*text)) {
      if (w != "{cv}") out.push_back(std::move(w));
    }
  }
  return out;
}

void to_json(nlohmann::json& j, const PromptTemplate& t) {
  j = nlohmann::json{
      {"role", t.role}, {"instruction", t.instruction}, {"input", t.input}, {"output_marker", t.output_marker}};
}

void from_json(const nlohmann::json& j, PromptTemplate& t) {
  PromptTemplate d;
  t.role = j.value("role", d.role);
  t.instruction = j.value("instruction", d.instruction);
  t.input = j.value("input", d.input);
  t.output_marker = j.value("output_marker", d.output_marker);
}

World::World(SkillOntology ontology, WorldConfig config, PromptTemplate prompt)
    : ontology_(std::move(ontology)), config_(config), prompt_(std::move(prompt)) {
  ontology_.validate();
  config_.validate(ontology_);
  prompt_.validate();
  build_vocabulary();
}

void World::build_vocabulary() {
  for (const auto& w : prompt_.words()) vocab_.add(w);
  resp_marker_ = vocab_.add(kRespMarker);
  req_marker_ = vocab_.add(kReqMarker);
  for (const auto& f : ontology_.families) {
    vocab_.add(f.name);
    for (const auto& r : f.responsibilities) {
      for (const auto& w : r) vocab_.add(w);
    }
    for (const auto& p : f.pay_bands) vocab_.add(p);
  }
  for (const auto& s : ontology_.skills) vocab_.add(s);
  for (int l = 0; l < kLevelCount; ++l) {
    vocab_.add(jd_level_word(l));
    vocab_.add(cv_level_word(l));
  }
  for (const auto& f : ontology_.fillers) vocab_.add(f);

  skill_.assign(vocab_.size(), -1);
  family_token_.assign(vocab_.size(), -1);
  for (std::size_t s = 0; s < ontology_.skills.size(); ++s) {
    skill_[vocab_.id(ontology_.skills[s])] = static_cast<long>(s);
  }
  for (std::size_t f = 0; f < ontology_.families.size(); ++f) {
    family_token_[vocab_.id(ontology_.families[f].name)] = static_cast<long>(f);
  }
}

long World::skill_of(TokenId token) const { return token < skill_.size() ? skill_[token] : -1; }

namespace {

// k distinct elements of pool in random order.
std::vector<std::size_t> choose(Rng& rng, std::vector<std::size_t> pool, std::size_t k) {
  rng.shuffle(pool);
  pool.resize(std::min(k, pool.size()));
  return pool;
}

bool contains(std::span<const std::size_t> v, std::size_t x) { return std::find(v.begin(), v.end(), x) != v.end(); }

}  // namespace

CVDoc World::sample_cv(Rng& rng, std::uint64_t seeker_id) const {
  CVDoc cv;
  cv.seeker_id = seeker_id;
  cv.level = static_cast<int>(rng.below(kLevelCount));
  std::vector<std::size_t> homes;
  for (std::size_t f = 0; f < ontology_.families.size(); ++f) {
    if (ontology_.families[f].min_level <= cv.level) homes.push_back(f);
  }
  const std::size_t home = homes[rng.below(homes.size())];
  const auto& home_pool = ontology_.families[home].skills;
  const std::size_t n_skills =
      config_.min_skills + rng.below(config_.max_skills - config_.min_skills + 1);
  const std::size_t n_home = std::min(
      home_pool.size(), config_.min_home_skills + rng.below(n_skills - config_.min_home_skills + 1));
  cv.skills = choose(rng, home_pool, n_home);
  std::vector<std::size_t> rest;
  for (std::size_t s = 0; s < ontology_.skills.size(); ++s) {
    if (!contains(cv.skills, s)) rest.push_back(s);
  }
  for (std::size_t s : choose(rng, rest, n_skills - cv.skills.size())) cv.skills.push_back(s);
  rng.shuffle(cv.skills);
  std::vector<std::size_t> fillers(ontology_.fillers.size());
  for (std::size_t i = 0; i < fillers.size(); ++i) fillers[i] = i;
  cv.fillers = choose(rng, fillers, rng.below(config_.max_fillers + 1));
  cv.tokens = render_cv(cv);
  return cv;
}

Tokens World::render_cv(const CVDoc& cv) const {
  Tokens t;
  t.push_back(vocab_.id(cv_level_word(cv.level)));
  for (std::size_t s : cv.skills) t.push_back(vocab_.id(ontology_.skills.at(s)));
  for (std::size_t f : cv.fillers) t.push_back(vocab_.id(ontology_.fillers.at(f)));
  return t;
}

Tokens World::render_jd(const JDDoc& jd) const {
  const auto& fam = ontology_.families.at(jd.family);
  Tokens t;
  t.push_back(vocab_.id(fam.name));
  t.push_back(resp_marker_);
  for (const auto& w : fam.responsibilities.at(jd.responsibility)) t.push_back(vocab_.id(w));
  t.push_back(req_marker_);
  for (std::size_t s : jd.required) t.push_back(vocab_.id(ontology_.skills.at(s)));
  t.push_back(vocab_.id(jd_level_word(fam.min_level)));
  t.push_back(vocab_.id(fam.pay_bands.at(jd.pay_band)));
  t.push_back(kEosToken);
  return t;
}

int World::match_label(int level, std::span<const std::size_t> skills, std::size_t family,
                       std::span<const std::size_t> required) const {
  if (required.empty()) return 0;
  if (level < ontology_.families.at(family).min_level) return 0;
  std::size_t overlap = 0;
  for (std::size_t r : required) overlap += contains(skills, r) ? 1 : 0;
  return static_cast<double>(overlap) / static_cast<double>(required.size()) >= config_.match_threshold ? 1 : 0;
}

int World::match_label(const CVDoc& cv, const JDDoc& jd) const {
  return match_label(cv.level, cv.skills, jd.family, jd.required);
}

bool World::label_feasible(const CVDoc& cv, int desired) const {
  for (std::size_t f = 0; f < ontology_.families.size(); ++f) {
    const auto& fam = ontology_.families[f];
    std::size_t have = 0;
    for (std::size_t s : fam.skills) have += contains(cv.skills, s) ? 1 : 0;
    const std::size_t missing = fam.skills.size() - have;
    for (std::size_t m = config_.min_required; m <= config_.max_required; ++m) {
      // Achievable overlap counts for a size-m requirement lie in [lo, hi].
      const std::size_t hi = std::min(have, m);
      const std::size_t lo = m > missing ? m - missing : 0;
      const bool level_ok = cv.level >= fam.min_level;
      const double need = config_.match_threshold * static_cast<double>(m);
      if (desired == 1 && level_ok && static_cast<double>(hi) >= need) return true;
      if (desired == 0 && (!level_ok || static_cast<double>(lo) < need)) return true;
    }
  }
  return false;
}

JDDoc World::sample_jd_for_cv(const CVDoc& cv, int desired, Rng& rng, std::uint64_t job_id,
                              std::size_t* draws) const {
  if (desired != 0 && desired != 1) throw ConfigError("sample_jd_for_cv: desired label must be 0 or 1");
  if (!label_feasible(cv, desired)) {
    throw ConfigError("sample_jd_for_cv: label " + std::to_string(desired) + " is infeasible for seeker " +
                      std::to_string(cv.seeker_id));
  }
  std::vector<std::size_t> touched, eligible;
  for (std::size_t f = 0; f < ontology_.families.size(); ++f) {
    std::size_t have = 0;
    for (std::size_t s : ontology_.families[f].skills) have += contains(cv.skills, s) ? 1 : 0;
    if (have > 0) touched.push_back(f);
    if (have >= config_.min_required && cv.level >= ontology_.families[f].min_level) eligible.push_back(f);
  }
  const std::size_t span_m = config_.max_required - config_.min_required + 1;
  for (std::size_t draw = 1; draw <= config_.max_draws; ++draw) {
    JDDoc jd;
    jd.job_id = job_id;
    const std::size_t m = config_.min_required + rng.below(span_m);
    if (desired == 1 && !eligible.empty() && rng.bernoulli(0.9)) {
      // Build from the CV's own skills in that family, topped up from the pool.
      jd.family = eligible[rng.below(eligible.size())];
      std::vector<std::size_t> mine, other;
      for (std::size_t s : ontology_.families[jd.family].skills) (contains(cv.skills, s) ? mine : other).push_back(s);
      jd.required = choose(rng, mine, m);
      for (std::size_t s : choose(rng, other, m - jd.required.size())) jd.required.push_back(s);
      rng.shuffle(jd.required);
    } else {
      const bool hard = desired == 0 && !touched.empty() && rng.bernoulli(config_.hard_negative_rate);
      jd.family = hard ? touched[rng.below(touched.size())] : rng.below(ontology_.families.size());
      jd.required = choose(rng, ontology_.families[jd.family].skills, m);
    }
    const auto& fam = ontology_.families[jd.family];
    jd.responsibility = rng.below(fam.responsibilities.size());
    jd.pay_band = rng.below(fam.pay_bands.size());
    if (match_label(cv, jd) == desired) {
      jd.tokens = render_jd(jd);
      if (draws != nullptr) *draws = draw;
      return jd;
    }
  }
  throw std::runtime_error("sample_jd_for_cv: no JD with label " + std::to_string(desired) + " after " +
                           std::to_string(config_.max_draws) + " draws for seeker " + std::to_string(cv.seeker_id));
}

World::ParsedJD World::parse_jd(std::span<const TokenId> tokens) const {
  ParsedJD p;
  std::size_t end = 0;
  while (end < tokens.size() && tokens[end] != kEosToken) ++end;
  p.terminated = end < tokens.size();
  p.length = end;
  std::set<TokenId> seen;
  for (std::size_t i = 0; i < end; ++i) {
    if (!seen.insert(tokens[i]).second) ++p.repeats;
  }
  enum class Region { head, duties, requirements, tail } region = Region::head;
  for (std::size_t i = 0; i < end; ++i) {
    const TokenId t = tokens[i];
    if (t < family_token_.size() && family_token_[t] >= 0 && !p.has_family) {
      p.has_family = true;
      p.family = static_cast<std::size_t>(family_token_[t]);
      continue;
    }
    if (t == resp_marker_) {
      region = Region::duties;
      continue;
    }
    if (t == req_marker_) {
      region = Region::requirements;
      p.has_requirements = true;
      continue;
    }
    const std::string& w = vocab_.word(t);
    if (w.rfind("level_", 0) == 0) {
      p.has_level = true;
      region = Region::tail;
      continue;
    }
    if (w.rfind("pay_band_", 0) == 0) {
      p.has_pay = true;
      region = Region::tail;
      continue;
    }
    if (region == Region::duties) p.has_responsibility = true;
    if (region == Region::requirements) {
      const long s = skill_of(t);
      if (s >= 0 && !contains(p.required, static_cast<std::size_t>(s))) p.required.push_back(static_cast<std::size_t>(s));
    }
  }
  return p;
}

}  // namespace jobgen::corpus
