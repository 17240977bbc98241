#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "jobgen/common/tokens.hpp"

namespace jobgen::corpus {

inline constexpr int kLevelCount = 3;

struct JobFamily {
  std::string name;
  std::vector<std::size_t> skills;  // indices into SkillOntology::skills
  int min_level = 0;
  std::vector<std::string> pay_bands;
  std::vector<std::vector<std::string>> responsibilities;
};

struct SkillOntology {
  std::vector<std::string> skills;
  std::vector<JobFamily> families;
  std::vector<std::string> fillers;  // CV words that carry no skill signal

  void validate() const;
  // Index of the family whose pool contains the skill.
  std::size_t family_of(std::size_t skill) const;

  // Eight families of five skills each, with disjoint pools.
  static SkillOntology standard();
};

void to_json(nlohmann::json& j, const JobFamily& f);
void from_json(const nlohmann::json& j, JobFamily& f);
void to_json(nlohmann::json& j, const SkillOntology& o);
void from_json(const nlohmann::json& j, SkillOntology& o);

// Level surface forms differ between CVs and JDs; skills share one token.
std::string cv_level_word(int level);
std::string jd_level_word(int level);

// Closed word-level vocabulary. Ids 0..2 are the reserved pad/eos/sep tokens.
class Vocabulary {
 public:
  Vocabulary();

  TokenId add(const std::string& word);
  TokenId id(std::string_view word) const;
  bool contains(std::string_view word) const;
  const std::string& word(TokenId id) const;
  std::size_t size() const noexcept { return words_.size(); }
  const std::vector<std::string>& words() const noexcept { return words_; }

  // Whitespace tokenization; unknown words are rejected.
  Tokens encode(std::string_view text) const;
  // Space-joined words; reserved tokens render as <pad>, <eos>, <sep>.
  std::string decode(std::span<const TokenId> tokens) const;

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
};

void to_json(nlohmann::json& j, const Vocabulary& v);
void from_json(const nlohmann::json& j, Vocabulary& v);

std::vector<std::string> split_words(std::string_view text);

}  // namespace jobgen::corpus
