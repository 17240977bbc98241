#include "jobgen/corpus/ontology.hpp"

#include <cctype>
#include <set>

#include "jobgen/common/error.hpp"

namespace jobgen::corpus {

void SkillOntology::validate() const {
  if (skills.empty() || families.empty()) throw ConfigError("ontology: needs skills and families");
  std::set<std::string> names;
  std::vector<int> owner(skills.size(), -1);
  for (std::size_t f = 0; f < families.size(); ++f) {
    const auto& fam = families[f];
    if (!names.insert(fam.name).second) throw ConfigError("ontology: duplicate family name '" + fam.name + "'");
    if (fam.skills.empty()) throw ConfigError("ontology: family '" + fam.name + "' has no skills");
    if (fam.min_level < 0 || fam.min_level >= kLevelCount) {
      throw ConfigError("ontology: family '" + fam.name + "' has an invalid minimum level");
    }
    if (fam.pay_bands.empty() || fam.responsibilities.empty()) {
      throw ConfigError("ontology: family '" + fam.name + "' needs pay bands and responsibilities");
    }
    for (std::size_t s : fam.skills) {
      if (s >= skills.size()) throw ConfigError("ontology: family '" + fam.name + "' references an unknown skill");
      if (owner[s] != -1) throw ConfigError("ontology: skill '" + skills[s] + "' belongs to two families");
      owner[s] = static_cast<int>(f);
    }
  }
  for (std::size_t s = 0; s < skills.size(); ++s) {
    if (owner[s] == -1) throw ConfigError("ontology: skill '" + skills[s] + "' belongs to no family");
  }
}

std::size_t SkillOntology::family_of(std::size_t skill) const {
  for (std::size_t f = 0; f < families.size(); ++f) {
    for (std::size_t s : families[f].skills) {
      if (s == skill) return f;
    }
  }
  throw ConfigError("ontology: skill index " + std::to_string(skill) + " has no family");
}

SkillOntology SkillOntology::standard() {
  struct Row {
    const char* name;
    int min_level;
    std::vector<std::string> skills;
    std::vector<std::vector<std::string>> resp;
  };
  const std::vector<Row> rows = {
      {"data_analyst", 1, {"sql", "python", "statistics", "tableau", "spark"},
       {{"build", "dashboards"}, {"analyze", "product", "metrics"}}},
      {"frontend_engineer", 0, {"javascript", "css", "react", "html", "typescript"},
       {{"build", "web", "interfaces"}, {"improve", "page", "speed"}}},
      {"backend_engineer", 1, {"java", "golang", "postgres", "docker", "kafka"},
       {{"design", "services"}, {"scale", "data", "pipelines"}}},
      {"mobile_developer", 0, {"swift", "kotlin", "android", "ios", "flutter"},
       {{"ship", "mobile", "apps"}, {"improve", "app", "stability"}}},
      {"devops_engineer", 2, {"kubernetes", "terraform", "linux", "aws", "ansible"},
       {{"automate", "deployments"}, {"run", "cloud", "infrastructure"}}},
      {"product_designer", 0, {"figma", "sketch", "typography", "wireframing", "prototyping"},
       {{"design", "user", "flows"}, {"run", "user", "research"}}},
      {"marketing_specialist", 0, {"seo", "copywriting", "analytics", "branding", "campaigns"},
       {{"grow", "brand", "reach"}, {"plan", "campaign", "calendar"}}},
      {"financial_analyst", 1, {"accounting", "excel", "forecasting", "auditing", "budgeting"},
       {{"prepare", "forecasts"}, {"review", "budgets"}}},
  };
  SkillOntology o;
  for (const auto& r : rows) {
    JobFamily f;
    f.name = r.name;
    f.min_level = r.min_level;
    for (const auto& s : r.skills) {
      f.skills.push_back(o.skills.size());
      o.skills.push_back(s);
    }
    f.pay_bands = {"pay_band_a", "pay_band_b", "pay_band_c"};
    f.responsibilities = r.resp;
    o.families.push_back(std::move(f));
  }
  o.fillers = {"team_player", "remote_ok", "fast_learner", "degree_bsc",
               "degree_msc",  "bilingual", "relocate_ok",  "mentor"};
  o.validate();
  return o;
}

void to_json(nlohmann::json& j, const JobFamily& f) {
  j = nlohmann::json{{"name", f.name},
                     {"skills", f.skills},
                     {"min_level", f.min_level},
                     {"pay_bands", f.pay_bands},
                     {"responsibilities", f.responsibilities}};
}

void from_json(const nlohmann::json& j, JobFamily& f) {
  j.at("name").get_to(f.name);
  j.at("skills").get_to(f.skills);
  j.at("min_level").get_to(f.min_level);
  j.at("pay_bands").get_to(f.pay_bands);
  j.at("responsibilities").get_to(f.responsibilities);
}

void to_json(nlohmann::json& j, const SkillOntology& o) {
  j = nlohmann::json{{"schema", "jobgen.ontology.v1"}, {"skills", o.skills}, {"families", o.families},
                     {"fillers", o.fillers}};
}

void from_json(const nlohmann::json& j, SkillOntology& o) {
  if (j.value("schema", "") != "jobgen.ontology.v1") throw ConfigError("ontology: unsupported schema");
  j.at("skills").get_to(o.skills);
  j.at("families").get_to(o.families);
  j.at("fillers").get_to(o.fillers);
  o.validate();
}


namespace {
const char* const kLevelNames[kLevelCount] = {"junior", "mid", "senior"};

void check_level(int level) {
  if (level < 0 || level >= kLevelCount) throw ConfigError("invalid experience level " + std::to_string(level));
}
}  // namespace

std::string cv_level_word(int level) {
  check_level(level);
  return std::string("exp_") + kLevelNames[level];
}

std::string jd_level_word(int level) {
  check_level(level);
  return std::string("level_") + kLevelNames[level];
}

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<eos>");
  add("<sep>");
}

TokenId Vocabulary::add(const std::string& word) {
  if (auto it = index_.find(word); it != index_.end()) return it->second;
  const auto id = static_cast<TokenId>(words_.size());
  words_.push_back(word);
  index_.emplace(word, id);
  return id;
}

TokenId Vocabulary::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) throw ConfigError("vocabulary: unknown word '" + std::string(word) + "'");
  return it->second;
}

bool Vocabulary::contains(std::string_view word) const { return index_.count(std::string(word)) > 0; }

const std::string& Vocabulary::word(TokenId id) const {
  if (id >= words_.size()) throw ConfigError("vocabulary: token id " + std::to_string(id) + " out of range");
  return words_[id];
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

Tokens Vocabulary::encode(std::string_view text) const {
  Tokens out;
  for (const auto& w : split_words(text)) out.push_back(id(w));
  return out;
}

std::string Vocabulary::decode(std::span<const TokenId> tokens) const {
  std::string out;
  for (TokenId t : tokens) {
    if (!out.empty()) out += ' ';
    out += word(t);
  }
  return out;
}

void to_json(nlohmann::json& j, const Vocabulary& v) {
  j = nlohmann::json{{"schema", "jobgen.vocab.v1"}, {"words", v.words()}};
}

void from_json(const nlohmann::json& j, Vocabulary& v) {
  if (j.value("schema", "") != "jobgen.vocab.v1") throw ConfigError("vocabulary: unsupported schema");
  const auto words = j.at("words").get<std::vector<std::string>>();
  if (words.size() < 3 || words[0] != "<pad>" || words[1] != "<eos>" || words[2] != "<sep>") {
    throw ConfigError("vocabulary: reserved tokens missing");
  }
  v = Vocabulary();
  for (const auto& w : words) v.add(w);
  if (v.size() != words.size()) throw ConfigError("vocabulary: duplicate words");
}

}  // namespace jobgen::corpus
