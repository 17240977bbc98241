#include "jobgen/pipeline/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "jobgen/common/error.hpp"
#include "jobgen/common/hash.hpp"

namespace jobgen::pipeline {

std::size_t GenerationSettings::max_n() const {
  std::size_t m = n;
  for (std::size_t k : sweep) m = std::max(m, k);
  return m;
}

void GenerationSettings::validate() const {
  sampling.validate();
  if (n == 0) throw ConfigError("generation: n must be positive");
  for (std::size_t k : sweep) {
    if (k == 0) throw ConfigError("generation: sweep counts must be positive");
  }
  if (max_prompt_len == 0) throw ConfigError("generation: max_prompt_len must be positive");
}

void to_json(nlohmann::json& j, const GenerationSettings& g) {
  j = nlohmann::json{{"sampling", g.sampling},
                     {"n", g.n},
                     {"sweep", g.sweep},
                     {"sweep_predictor", recsys::to_string(g.sweep_predictor)},
                     {"max_prompt_len", g.max_prompt_len}};
}

void from_json(const nlohmann::json& j, GenerationSettings& g) {
  GenerationSettings d;
  g.sampling = j.value("sampling", d.sampling);
  g.n = j.value("n", d.n);
  g.sweep = j.value("sweep", d.sweep);
  g.sweep_predictor = recsys::predictor_kind_from_string(j.value("sweep_predictor", recsys::to_string(d.sweep_predictor)));
  g.max_prompt_len = j.value("max_prompt_len", d.max_prompt_len);
}

void QualitySettings::validate() const {
  if (bootstrap_resamples == 0) throw ConfigError("quality: bootstrap_resamples must be positive");
  if (!(interval_level > 0.0 && interval_level < 1.0)) throw ConfigError("quality: interval_level must lie in (0, 1)");
}

void to_json(nlohmann::json& j, const QualitySettings& q) {
  j = nlohmann::json{{"bootstrap_resamples", q.bootstrap_resamples}, {"interval_level", q.interval_level}};
}

void from_json(const nlohmann::json& j, QualitySettings& q) {
  QualitySettings d;
  q.bootstrap_resamples = j.value("bootstrap_resamples", d.bootstrap_resamples);
  q.interval_level = j.value("interval_level", d.interval_level);
}

namespace {

void validate_model(models::TransformerConfig c) {
  if (c.vocab_size == 0) c.vocab_size = 3;
  c.validate();
}

}  // namespace

void RunConfig::validate() const {
  const auto ontology = corpus::SkillOntology::standard();
  world.validate(ontology);
  datasets.validate();
  prompt.validate();
  validate_model(generator);
  validate_model(reward_model);
  auto rec_model = recommender;
  if (rec_model.encoder.vocab_size == 0) rec_model.encoder.vocab_size = 3;
  rec_model.validate();
  sft.validate();
  rmt.validate();
  ppo.validate();
  rec.validate();
  rubric.validate();
  generation.validate();
  quality.validate();
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = nlohmann::json{{"seed", c.seed},
                     {"out", c.out.string()},
                     {"world", c.world},
                     {"datasets", c.datasets},
                     {"prompt", c.prompt},
                     {"generator", c.generator},
                     {"reward_model", c.reward_model},
                     {"recommender", c.recommender},
                     {"sft", c.sft},
                     {"rmt", c.rmt},
                     {"ppo", c.ppo},
                     {"rec", c.rec},
                     {"rubric", c.rubric},
                     {"generation", c.generation},
                     {"quality", c.quality}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  const std::set<std::string> known{"seed", "out", "world", "datasets", "prompt", "generator", "reward_model",
                                    "recommender", "sft", "rmt", "ppo", "rec", "rubric", "generation", "quality"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("run config: unknown key '" + key + "'");
  }
  RunConfig d;
  c.seed = j.value("seed", d.seed);
  c.out = j.value("out", d.out.string());
  c.world = j.value("world", d.world);
  c.datasets = j.value("datasets", d.datasets);
  c.prompt = j.value("prompt", d.prompt);
  c.generator = j.value("generator", d.generator);
  c.reward_model = j.value("reward_model", d.reward_model);
  c.recommender = j.value("recommender", d.recommender);
  c.sft = j.value("sft", d.sft);
  c.rmt = j.value("rmt", d.rmt);
  c.ppo = j.value("ppo", d.ppo);
  c.rec = j.value("rec", d.rec);
  c.rubric = j.value("rubric", d.rubric);
  c.generation = j.value("generation", d.generation);
  c.quality = j.value("quality", d.quality);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  RunConfig c;
  try {
    c = j.get<RunConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  c.validate();
  return c;
}

void save_run_config(const std::filesystem::path& path, const RunConfig& config) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << nlohmann::json(config).dump(2) << '\n';
}

std::string config_checksum(const RunConfig& config) {
  nlohmann::json j = config;
  j.erase("out");
  return sha256_hex(j.dump());
}

std::uint64_t stage_seed(const RunConfig& config, const std::string& name) { return derive_seed(config.seed, name); }

RunConfig resolve(const RunConfig& config, const corpus::World& world) {
  RunConfig r = config;
  const std::size_t vocab = world.vocabulary().size();
  for (auto* m : {&r.generator, &r.reward_model, &r.recommender.encoder}) {
    if (m->vocab_size == 0) m->vocab_size = vocab;
    if (m->vocab_size != vocab) {
      throw ConfigError("model vocab_size " + std::to_string(m->vocab_size) + " does not match the world's " +
                        std::to_string(vocab));
    }
  }
  r.sft.seed = stage_seed(config, "sft");
  r.rmt.seed = stage_seed(config, "rmt");
  r.ppo.seed = stage_seed(config, "ppo");
  r.rec.seed = stage_seed(config, "rec");
  r.validate();
  return r;
}

}  // namespace jobgen::pipeline
