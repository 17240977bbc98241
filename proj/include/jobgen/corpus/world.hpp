#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "jobgen/common/rng.hpp"
#include "jobgen/corpus/ontology.hpp"

namespace jobgen::corpus {

struct WorldConfig {
  std::size_t min_skills = 2;
  std::size_t max_skills = 6;
  // Skills drawn from the CV's home family, whose minimum level the CV meets.
  std::size_t min_home_skills = 2;
  std::size_t max_fillers = 2;
  std::size_t min_required = 2;
  std::size_t max_required = 4;
  double match_threshold = 0.75;
  // Share of mismatched proposals drawn from families the CV already touches.
  double hard_negative_rate = 0.5;
  std::size_t max_draws = 1000;

  void validate(const SkillOntology& ontology) const;
};

void to_json(nlohmann::json& j, const WorldConfig& c);
void from_json(const nlohmann::json& j, WorldConfig& c);

struct CVDoc {
  std::uint64_t seeker_id = 0;
  int level = 0;
  std::vector<std::size_t> skills;   // rendering order
  std::vector<std::size_t> fillers;  // indices into ontology fillers
  Tokens tokens;
};

struct JDDoc {
  std::uint64_t job_id = 0;
  std::size_t family = 0;
  std::vector<std::size_t> required;  // rendering order
  std::size_t responsibility = 0;
  std::size_t pay_band = 0;
  Tokens tokens;  // ends with the end-of-sequence token
};

void to_json(nlohmann::json& j, const CVDoc& d);
void from_json(const nlohmann::json& j, CVDoc& d);
void to_json(nlohmann::json& j, const JDDoc& d);
void from_json(const nlohmann::json& j, JDDoc& d);

// Four-part prompt: role, instruction, input (CV), output (JD). The input text
// must contain the {cv} slot; output_marker opens the output region.
struct PromptTemplate {
  std::string role = "role : recruitment advisor";
  std::string instruction = "task : suggest a matching job";
  std::string input = "candidate : {cv}";
  std::string output_marker = "job :";

  void validate() const;
  std::vector<std::string> words() const;
};

void to_json(nlohmann::json& j, const PromptTemplate& t);
void from_json(const nlohmann::json& j, PromptTemplate& t);

// The synthetic labour market: ontology, vocabulary and the ground-truth rule.
class World {
 public:
  explicit World(SkillOntology ontology, WorldConfig config = {}, PromptTemplate prompt = {});

  const SkillOntology& ontology() const noexcept { return ontology_; }
  const WorldConfig& config() const noexcept { return config_; }
  const Vocabulary& vocabulary() const noexcept { return vocab_; }
  const PromptTemplate& prompt_template() const noexcept { return prompt_; }

  CVDoc sample_cv(Rng& rng, std::uint64_t seeker_id) const;
  Tokens render_cv(const CVDoc& cv) const;
  Tokens render_jd(const JDDoc& jd) const;

  // 1 iff the CV covers at least the threshold share of the required skills
  // and meets the family's minimum experience level.
  int match_label(const CVDoc& cv, const JDDoc& jd) const;
  int match_label(int level, std::span<const std::size_t> skills, std::size_t family,
                  std::span<const std::size_t> required) const;

  bool label_feasible(const CVDoc& cv, int desired) const;
  // Rejection sampler. Throws ConfigError when the label is infeasible and
  // std::runtime_error if max_draws proposals all fail.
  // draws, when given, receives the number of proposals consumed.
  JDDoc sample_jd_for_cv(const CVDoc& cv, int desired, Rng& rng, std::uint64_t job_id,
                         std::size_t* draws = nullptr) const;

  // Reads the structured parts back out of a JD token sequence, as far as it
  // parses. Generated JDs may be malformed.
  struct ParsedJD {
    bool has_family = false;
    std::size_t family = 0;
    bool has_responsibility = false;
    bool has_requirements = false;
    bool has_level = false;
    bool has_pay = false;
    bool terminated = false;
    std::vector<std::size_t> required;  // skills listed after the requirements marker
    std::size_t length = 0;             // tokens before EOS
    std::size_t repeats = 0;            // repeated words before EOS
  };
  ParsedJD parse_jd(std::span<const TokenId> tokens) const;

  // Skill index of a skill token, or -1.
  long skill_of(TokenId token) const;

 private:
  void build_vocabulary();

  SkillOntology ontology_;
  WorldConfig config_;
  PromptTemplate prompt_;
  Vocabulary vocab_;
  std::vector<long> skill_, family_token_;
  TokenId resp_marker_ = 0, req_marker_ = 0;
};

inline constexpr const char* kRespMarker = "duties";
inline constexpr const char* kReqMarker = "requires";

}  // namespace jobgen::corpus
