#include "jobgen/corpus/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <tuple>

#include "jobgen/common/error.hpp"

namespace jobgen::corpus {

namespace fs = std::filesystem;

std::size_t DatasetConfig::total_seekers() const {
  return sft_pairs + rmt_triples + rl_cvs + rec_seekers + eval_cvs;
}

void DatasetConfig::validate() const {
  if (sft_pairs == 0 || rmt_triples == 0 || rl_cvs == 0 || rec_seekers == 0 || eval_cvs == 0 ||
      interactions_per_seeker == 0) {
    throw ConfigError("datasets: every size must be positive");
  }
  for (double f : {sft_holdout, rmt_holdout, rec_val_fraction, rec_test_fraction, cold_fraction, label_noise}) {
    if (!(f >= 0.0 && f < 1.0)) throw ConfigError("datasets: fractions must lie in [0, 1)");
  }
  if (rec_val_fraction + rec_test_fraction >= 1.0) throw ConfigError("datasets: no room left for rec training");
  if (total_seekers() > max_seekers) {
    throw ConfigError("datasets: " + std::to_string(total_seekers()) + " seekers requested but only " +
                      std::to_string(max_seekers) + " are available");
  }
}

void to_json(nlohmann::json& j, const DatasetConfig& c) {
  j = nlohmann::json{{"sft_pairs", c.sft_pairs},
                     {"sft_holdout", c.sft_holdout},
                     {"rmt_triples", c.rmt_triples},
                     {"rmt_holdout", c.rmt_holdout},
                     {"rl_cvs", c.rl_cvs},
                     {"rec_seekers", c.rec_seekers},
                     {"interactions_per_seeker", c.interactions_per_seeker},
                     {"rec_val_fraction", c.rec_val_fraction},
                     {"rec_test_fraction", c.rec_test_fraction},
                     {"cold_fraction", c.cold_fraction},
                     {"eval_cvs", c.eval_cvs},
                     {"label_noise", c.label_noise},
                     {"max_seekers", c.max_seekers}};
}

void from_json(const nlohmann::json& j, DatasetConfig& c) {
  DatasetConfig d;
  c.sft_pairs = j.value("sft_pairs", d.sft_pairs);
  c.sft_holdout = j.value("sft_holdout", d.sft_holdout);
  c.rmt_triples = j.value("rmt_triples", d.rmt_triples);
  c.rmt_holdout = j.value("rmt_holdout", d.rmt_holdout);
  c.rl_cvs = j.value("rl_cvs", d.rl_cvs);
  c.rec_seekers = j.value("rec_seekers", d.rec_seekers);
  c.interactions_per_seeker = j.value("interactions_per_seeker", d.interactions_per_seeker);
  c.rec_val_fraction = j.value("rec_val_fraction", d.rec_val_fraction);
  c.rec_test_fraction = j.value("rec_test_fraction", d.rec_test_fraction);
  c.cold_fraction = j.value("cold_fraction", d.cold_fraction);
  c.eval_cvs = j.value("eval_cvs", d.eval_cvs);
  c.label_noise = j.value("label_noise", d.label_noise);
  c.max_seekers = j.value("max_seekers", d.max_seekers);
}

namespace {

constexpr std::uint64_t kTimeTicks = 1'000'000'000;

std::size_t holdout_count(std::size_t n, double fraction) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(n) * fraction));
}

// Seekers and jobs of one set get ids from a dedicated range.
struct IdRange {
  std::uint64_t next;
  std::uint64_t take() { return next++; }
};

}  // namespace

Datasets make_datasets(const World& world, const DatasetConfig& config, std::uint64_t seed) {
  config.validate();
  Datasets out;
  IdRange seekers{1};
  IdRange jobs{1};

  {
    const std::uint64_t s = derive_seed(seed, "sft");
    std::vector<SftExample> all;
    for (std::size_t i = 0; i < config.sft_pairs; ++i) {
      Rng rng(derive_seed(s, i));
      SftExample ex;
      ex.cv = world.sample_cv(rng, seekers.take());
      ex.jd = world.sample_jd_for_cv(ex.cv, 1, rng, jobs.take());
      all.push_back(std::move(ex));
    }
    const std::size_t test = holdout_count(all.size(), config.sft_holdout);
    out.sft_test.assign(all.end() - static_cast<std::ptrdiff_t>(test), all.end());
    all.resize(all.size() - test);
    out.sft_train = std::move(all);
  }
  {
    const std::uint64_t s = derive_seed(seed, "rmt");
    std::vector<RmtExample> all;
    for (std::size_t i = 0; i < config.rmt_triples; ++i) {
      Rng rng(derive_seed(s, i));
      RmtExample ex;
      ex.cv = world.sample_cv(rng, seekers.take());
      ex.positive = world.sample_jd_for_cv(ex.cv, 1, rng, jobs.take());
      ex.negative = world.sample_jd_for_cv(ex.cv, 0, rng, jobs.take());
      all.push_back(std::move(ex));
    }
    const std::size_t test = holdout_count(all.size(), config.rmt_holdout);
    out.rmt_test.assign(all.end() - static_cast<std::ptrdiff_t>(test), all.end());
    all.resize(all.size() - test);
    out.rmt_train = std::move(all);
  }
  {
    const std::uint64_t s = derive_seed(seed, "rl");
    for (std::size_t i = 0; i < config.rl_cvs; ++i) {
      Rng rng(derive_seed(s, i));
      out.rl_cvs.push_back(world.sample_cv(rng, seekers.take()));
    }
  }
  {
    const std::uint64_t s = derive_seed(seed, "rec");
    const std::size_t n_cold = holdout_count(config.rec_seekers, config.cold_fraction);
    const std::size_t n_warm = config.rec_seekers - n_cold;
    std::vector<RecExample> warm, cold;
    for (std::size_t i = 0; i < config.rec_seekers; ++i) {
      Rng rng(derive_seed(s, i));
      const CVDoc cv = world.sample_cv(rng, seekers.take());
      std::vector<int> labels(config.interactions_per_seeker);
      for (std::size_t k = 0; k < labels.size(); ++k) labels[k] = static_cast<int>(k % 2 == 0);
      rng.shuffle(labels);
      for (int desired : labels) {
        RecExample ex;
        ex.cv = cv;
        ex.jd = world.sample_jd_for_cv(cv, desired, rng, jobs.take());
        ex.label = rng.bernoulli(config.label_noise) ? 1 - desired : desired;
        ex.time = rng.next_u64() % kTimeTicks;
        (i < n_warm ? warm : cold).push_back(std::move(ex));
      }
    }
    auto by_time = [](const RecExample& a, const RecExample& b) {
      return std::tie(a.time, a.cv.seeker_id, a.jd.job_id) < std::tie(b.time, b.cv.seeker_id, b.jd.job_id);
    };
    std::sort(warm.begin(), warm.end(), by_time);
    const std::size_t n_test = holdout_count(warm.size(), config.rec_test_fraction);
    const std::size_t n_val = holdout_count(warm.size(), config.rec_val_fraction);
    const std::size_t n_train = warm.size() - n_test - n_val;
    out.rec_train.assign(warm.begin(), warm.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.rec_val.assign(warm.begin() + static_cast<std::ptrdiff_t>(n_train),
                       warm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    out.rec_test.assign(warm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), warm.end());
    // Cold seekers arrive during the test window.
    const std::uint64_t test_start = out.rec_test.empty() ? 0 : out.rec_test.front().time;
    for (auto& ex : cold) {
      ex.time = test_start + ex.time % (kTimeTicks - test_start);
      out.rec_test.push_back(std::move(ex));
    }
    std::sort(out.rec_test.begin(), out.rec_test.end(), by_time);
    std::set<std::uint64_t> trained;
    for (const auto& ex : out.rec_train) trained.insert(ex.cv.seeker_id);
    for (auto* split : {&out.rec_val, &out.rec_test}) {
      for (auto& ex : *split) ex.cold = trained.count(ex.cv.seeker_id) == 0;
    }
  }
  {
    const std::uint64_t s = derive_seed(seed, "eval");
    for (std::size_t i = 0; i < config.eval_cvs; ++i) {
      Rng rng(derive_seed(s, i));
      out.eval_cvs.push_back(world.sample_cv(rng, seekers.take()));
    }
  }
  return out;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f << text;
    if (!f) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw MissingPrerequisite(path.string());
  return nlohmann::json::parse(f);
}

template <typename T, typename Fn>
void write_jsonl(const fs::path& path, const std::string& schema, const std::vector<T>& rows, Fn&& encode) {
  std::string text;
  for (const auto& r : rows) {
    nlohmann::json j = encode(r);
    j["schema"] = schema;
    text += j.dump();
    text += '\n';
  }
  write_text(path, text);
}

template <typename T, typename Fn>
std::vector<T> read_jsonl(const fs::path& path, const std::string& schema, Fn&& decode) {
  std::ifstream f(path);
  if (!f) throw MissingPrerequisite(path.string());
  std::vector<T> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    if (j.value("schema", "") != schema) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected schema " + schema);
    }
    rows.push_back(decode(j));
  }
  return rows;
}

}  // namespace

void save_world(const fs::path& dir, const World& world) {
  nlohmann::json j{{"schema", "jobgen.world.v1"},
                   {"ontology", world.ontology()},
                   {"config", world.config()},
                   {"prompt_template", world.prompt_template()}};
  write_text(dir / "world.json", j.dump(2) + "\n");
  write_text(dir / "vocab.json", nlohmann::json(world.vocabulary()).dump(2) + "\n");
}

World load_world(const fs::path& dir) {
  const auto j = read_json(dir / "world.json");
  if (j.value("schema", "") != "jobgen.world.v1") throw ConfigError("world.json: unsupported schema");
  World world(j.at("ontology").get<SkillOntology>(), j.at("config").get<WorldConfig>(),
              j.at("prompt_template").get<PromptTemplate>());
  // The persisted vocabulary must agree with the one rebuilt from the world.
  const auto vocab = read_json(dir / "vocab.json").get<Vocabulary>();
  if (vocab.words() != world.vocabulary().words()) throw ConfigError("vocab.json does not match world.json");
  return world;
}

void save_datasets(const fs::path& dir, const Datasets& d) {
  auto sft = [](const SftExample& e) { return nlohmann::json{{"cv", e.cv}, {"jd", e.jd}}; };
  auto rmt = [](const RmtExample& e) {
    return nlohmann::json{{"cv", e.cv}, {"positive", e.positive}, {"negative", e.negative}};
  };
  auto rec = [](const RecExample& e) {
    return nlohmann::json{{"seeker_id", e.cv.seeker_id}, {"job_id", e.jd.job_id}, {"label", e.label},
                          {"time", e.time},              {"cold", e.cold},        {"cv", e.cv},
                          {"jd", e.jd}};
  };
  auto cv = [](const CVDoc& c) { return nlohmann::json{{"cv", c}}; };
  write_jsonl(dir / "sft_train.jsonl", "jobgen.sft.v1", d.sft_train, sft);
  write_jsonl(dir / "sft_test.jsonl", "jobgen.sft.v1", d.sft_test, sft);
  write_jsonl(dir / "rmt_train.jsonl", "jobgen.rmt.v1", d.rmt_train, rmt);
  write_jsonl(dir / "rmt_test.jsonl", "jobgen.rmt.v1", d.rmt_test, rmt);
  write_jsonl(dir / "rl_cvs.jsonl", "jobgen.cv.v1", d.rl_cvs, cv);
  write_jsonl(dir / "rec_train.jsonl", "jobgen.rec.v1", d.rec_train, rec);
  write_jsonl(dir / "rec_val.jsonl", "jobgen.rec.v1", d.rec_val, rec);
  write_jsonl(dir / "rec_test.jsonl", "jobgen.rec.v1", d.rec_test, rec);
  write_jsonl(dir / "eval_cvs.jsonl", "jobgen.cv.v1", d.eval_cvs, cv);
}

Datasets load_datasets(const fs::path& dir) {
  auto sft = [](const nlohmann::json& j) { return SftExample{j.at("cv").get<CVDoc>(), j.at("jd").get<JDDoc>()}; };
  auto rmt = [](const nlohmann::json& j) {
    return RmtExample{j.at("cv").get<CVDoc>(), j.at("positive").get<JDDoc>(), j.at("negative").get<JDDoc>()};
  };
  auto rec = [](const nlohmann::json& j) {
    RecExample e;
    e.cv = j.at("cv").get<CVDoc>();
    e.jd = j.at("jd").get<JDDoc>();
    e.label = j.at("label").get<int>();
    e.time = j.at("time").get<std::uint64_t>();
    e.cold = j.at("cold").get<bool>();
    return e;
  };
  auto cv = [](const nlohmann::json& j) { return j.at("cv").get<CVDoc>(); };
  Datasets d;
  d.sft_train = read_jsonl<SftExample>(dir / "sft_train.jsonl", "jobgen.sft.v1", sft);
  d.sft_test = read_jsonl<SftExample>(dir / "sft_test.jsonl", "jobgen.sft.v1", sft);
  d.rmt_train = read_jsonl<RmtExample>(dir / "rmt_train.jsonl", "jobgen.rmt.v1", rmt);
  d.rmt_test = read_jsonl<RmtExample>(dir / "rmt_test.jsonl", "jobgen.rmt.v1", rmt);
  d.rl_cvs = read_jsonl<CVDoc>(dir / "rl_cvs.jsonl", "jobgen.cv.v1", cv);
  d.rec_train = read_jsonl<RecExample>(dir / "rec_train.jsonl", "jobgen.rec.v1", rec);
  d.rec_val = read_jsonl<RecExample>(dir / "rec_val.jsonl", "jobgen.rec.v1", rec);
  d.rec_test = read_jsonl<RecExample>(dir / "rec_test.jsonl", "jobgen.rec.v1", rec);
  d.eval_cvs = read_jsonl<CVDoc>(dir / "eval_cvs.jsonl", "jobgen.cv.v1", cv);
  return d;
}

}  // namespace jobgen::corpus
