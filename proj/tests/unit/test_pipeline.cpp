#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "jobgen/common/error.hpp"
#include "jobgen/common/hash.hpp"
#include "jobgen/pipeline/stages.hpp"

using namespace jobgen;
using namespace jobgen::pipeline;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("jobgen_pipeline_" + name);
  fs::remove_all(dir);
  return dir;
}

// A run small enough for a unit test: every stage takes a few seconds.
RunConfig tiny(const fs::path& out) {
  RunConfig c;
  c.out = out;
  c.datasets.sft_pairs = 40;
  c.datasets.rmt_triples = 40;
  c.datasets.rl_cvs = 16;
  c.datasets.rec_seekers = 60;
  c.datasets.interactions_per_seeker = 4;
  c.datasets.eval_cvs = 10;
  c.generator = {0, 64, 16, 1, 2, 32, 0.0, 0.05};
  c.reward_model = {0, 64, 16, 1, 2, 32, 0.0, 0.05};
  c.recommender.encoder = {0, 40, 8, 1, 2, 16, 0.0, 0.05};
  c.recommender.hidden = 16;
  c.sft.epochs = 2;
  c.rmt.epochs = 1;
  c.ppo.iterations = 2;
  c.ppo.rollout_batch = 8;
  c.ppo.minibatch = 4;
  c.ppo.inner_epochs = 1;
  c.ppo.sampling.max_new_tokens = 12;
  c.rec.epochs = 2;
  c.generation.sampling.max_new_tokens = 12;
  c.generation.sweep = {1, 2};
  c.quality.bootstrap_resamples = 50;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

}  // namespace

TEST_CASE("run config round-trips and rejects unknown keys") {
  RunConfig c = tiny("somewhere");
  c.seed = 99;
  c.generation.sweep_predictor = recsys::PredictorKind::dot;
  c.ppo.old_policy = ppo::OldPolicy::snapshot;
  const nlohmann::json j = c;
  const RunConfig back = j.get<RunConfig>();
  CHECK(nlohmann::json(back).dump() == j.dump());

  nlohmann::json bad = j;
  bad["sfft"] = nlohmann::json::object();
  CHECK_THROWS_AS((void)bad.get<RunConfig>(), ConfigError);

  const auto dir = scratch("config");
  fs::create_directories(dir);
  save_run_config(dir / "c.json", c);
  CHECK(nlohmann::json(load_run_config(dir / "c.json")).dump() == j.dump());
  std::ofstream(dir / "broken.json") << "{\"seed\": ";
  CHECK_THROWS_AS((void)load_run_config(dir / "broken.json"), ConfigError);
  std::ofstream(dir / "invalid.json") << "{\"generation\": {\"n\": 0}}";
  CHECK_THROWS_AS((void)load_run_config(dir / "invalid.json"), ConfigError);
  CHECK_THROWS_AS((void)load_run_config(dir / "absent.json"), ConfigError);
}

TEST_CASE("checksum ignores the output directory; stage seeds are named and stable") {
  RunConfig a = tiny("x"), b = tiny("y");
  CHECK(config_checksum(a) == config_checksum(b));
  b.seed = 8;
  CHECK(config_checksum(a) != config_checksum(b));
  std::set<std::uint64_t> seeds;
  for (const char* name : {"corpus", "sft", "rmt", "ppo", "rec", "eval.policy"}) seeds.insert(stage_seed(a, name));
  CHECK(seeds.size() == 6);
  CHECK(stage_seed(a, "sft") == stage_seed(tiny("z"), "sft"));
  CHECK(stage_seed(a, "sft") != stage_seed(b, "sft"));
}

TEST_CASE("resolve fills vocabulary sizes and stage seeds") {
  const RunConfig c = tiny("x");
  const corpus::World world(corpus::SkillOntology::standard(), c.world, c.prompt);
  const RunConfig r = resolve(c, world);
  CHECK(r.generator.vocab_size == world.vocabulary().size());
  CHECK(r.recommender.encoder.vocab_size == world.vocabulary().size());
  CHECK(r.sft.seed == stage_seed(c, "sft"));
  CHECK(r.rec.seed == stage_seed(c, "rec"));
  RunConfig wrong = c;
  wrong.generator.vocab_size = 7;
  CHECK_THROWS_AS((void)resolve(wrong, world), ConfigError);
}

TEST_CASE("stages refuse to run without their prerequisites") {
  const auto dir = scratch("prereq");
  Pipeline p(tiny(dir));
  try {
    p.train_sft();
    FAIL("expected a refusal");
  } catch (const MissingPrerequisite& e) {
    CHECK(e.artifact().find("manifest.json") != std::string::npos);
  }
  p.corpus();
  try {
    p.train_ppo();
    FAIL("expected a refusal");
  } catch (const MissingPrerequisite& e) {
    CHECK(e.artifact() == (dir / "checkpoints" / "sft.ckpt").string());
  }
  CHECK_THROWS_AS(p.generate("ppo", 1), MissingPrerequisite);
  CHECK_THROWS_AS(p.generate("other", 1), ConfigError);
  CHECK_THROWS_AS(p.eval_rec(), MissingPrerequisite);
  CHECK_THROWS_AS(p.eval_quality(), MissingPrerequisite);
}

TEST_CASE("corpus manifest counts, digests and label re-check") {
  const auto a = scratch("corpus_a"), b = scratch("corpus_b");
  const RunConfig ca = tiny(a);
  const auto m = Pipeline(ca).corpus();
  const auto again = Pipeline(tiny(b)).corpus();
  CHECK(m["files"] == again["files"]);
  CHECK(m["counts"]["sft_train"].get<std::size_t>() + m["counts"]["sft_test"].get<std::size_t>() == 40);
  CHECK(m["counts"]["rmt_train"].get<std::size_t>() + m["counts"]["rmt_test"].get<std::size_t>() == 40);
  CHECK(m["counts"]["rl_cvs"] == 16);
  CHECK(m["counts"]["eval_cvs"] == 10);
  const std::size_t rec = m["counts"]["rec_train"].get<std::size_t>() + m["counts"]["rec_val"].get<std::size_t>() +
                          m["counts"]["rec_test"].get<std::size_t>();
  CHECK(rec == 60 * 4);
  CHECK(m["label_recheck"]["rec_mismatches"] == 0);
  CHECK(m["label_recheck"]["pair_mismatches"] == 0);
  for (const auto& [name, digest] : m["files"].items()) {
    CHECK(sha256_file(a / "corpus" / name) == digest.get<std::string>());
  }
  CHECK(fs::exists(a / "config.json"));
}

TEST_CASE("tiny end-to-end run, generation contract and reports") {
  const auto dir = scratch("e2e");
  Pipeline p(tiny(dir));
  const auto out = p.run_all();

  // Generation: max_n records per CV, each ending in EOS or at the length cap.
  const auto loaded = recsys::load_generations(dir / "generations" / "ppo.jsonl");
  CHECK(loaded.warnings.empty());
  std::map<std::uint64_t, std::size_t> per_cv;
  for (const auto& r : loaded.rows) {
    ++per_cv[r.seeker_id];
    CHECK((r.hit_eos || r.tokens.size() == 12));
    if (r.hit_eos) CHECK(r.tokens.back() == kEosToken);
  }
  for (const auto& [seeker, count] : per_cv) CHECK(count == 2);

  const auto rec = read_json(dir / "reports" / "eval_rec.json");
  std::set<std::pair<std::string, bool>> cells;
  for (const auto& c : rec["cells"]) cells.insert({c["predictor"].get<std::string>(), c["enhanced"].get<bool>()});
  CHECK(cells.size() == 4);

  const auto q = read_json(dir / "reports" / "eval_quality.json")["tournament"];
  CHECK(q["win_rate"].get<double>() + q["tie_rate"].get<double>() + q["lose_rate"].get<double>() ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(q["order_disagreements"] == 0);
  CHECK(q["count"] == 10);

  const auto sweep = read_json(dir / "reports" / "eval_gen_sweep.json");
  CHECK(sweep["rows"].size() == 2);
  CHECK(out["ppo"]["eval_cvs"] == 10);

  // Every metrics record carries the config checksum prefix.
  for (const auto& e : fs::directory_iterator(dir / "metrics")) {
    std::ifstream f(e.path());
    std::string line;
    while (std::getline(f, line)) {
      CHECK(nlohmann::json::parse(line)["config"] == p.checksum().substr(0, 16));
    }
  }

  // n=4 gives exactly four records per CV.
  p.generate("sft", 4);
  std::map<std::uint64_t, std::size_t> counts;
  for (const auto& r : recsys::load_generations(dir / "generations" / "sft.jsonl").rows) ++counts[r.seeker_id];
  CHECK(counts.size() == per_cv.size());
  for (const auto& [seeker, count] : counts) CHECK(count == 4);

  // A fixed seed gives a stable generation file.
  const auto first = p.generate("sft", 1)["sha256"];
  CHECK(p.generate("sft", 1)["sha256"] == first);

  // Malformed CV lines are skipped with per-line warnings.
  const auto cvs = dir / "cvs.jsonl";
  {
    std::ofstream f(cvs);
    f << nlohmann::json(corpus::load_datasets(dir / "corpus").eval_cvs[0]).dump() << "\n";
    f << "not json\n";
    f << "{\"seeker_id\": 5}\n";
  }
  const auto s = p.generate("ppo", 2, cvs);
  CHECK(s["cvs"] == 1);
  CHECK(s["records"] == 2);
  REQUIRE(s["warnings"].size() == 2);
  CHECK(s["warnings"][0].get<std::string>().rfind("line 2:", 0) == 0);
  CHECK(s["warnings"][1].get<std::string>().rfind("line 3:", 0) == 0);
}

TEST_CASE("resumed fine-tuning matches the uninterrupted run") {
  const auto full_dir = scratch("resume_full"), part_dir = scratch("resume_part"), cut_dir = scratch("resume_cut");
  Pipeline full(tiny(full_dir));
  full.corpus();
  full.train_sft();

  // The one-epoch run stands in for an interruption after epoch 1: its epoch
  // order, seeds and initialization are those of the two-epoch run.
  RunConfig one = tiny(cut_dir);
  one.sft.epochs = 1;
  Pipeline cut(one);
  cut.corpus();
  cut.train_sft();
  auto ckpt = tensor::read_checkpoint(cut_dir / "checkpoints" / "sft.ckpt");
  CHECK(ckpt.meta["epoch"] == 1);

  Pipeline part(tiny(part_dir));
  part.corpus();
  ckpt.meta["run_config"] = part.checksum();
  const auto interrupted = part_dir / "interrupted.ckpt";
  tensor::write_checkpoint(interrupted, ckpt);
  const auto resumed = part.train_sft(interrupted);

  const auto a = tensor::read_checkpoint(full_dir / "checkpoints" / "sft.ckpt");
  const auto b = tensor::read_checkpoint(part_dir / "checkpoints" / "sft.ckpt");
  REQUIRE(a.tensors.size() == b.tensors.size());
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    const auto x = a.tensors[i].second.data(), y = b.tensors[i].second.data();
    CHECK(std::equal(x.begin(), x.end(), y.begin(), y.end()));
  }
  const auto report = nlohmann::json::parse(slurp(full_dir / "reports" / "sft.json"));
  CHECK(resumed["final_perplexity"] == report["final_perplexity"]);

  // A checkpoint from another configuration is refused.
  ckpt.meta["run_config"] = "0000";
  tensor::write_checkpoint(interrupted, ckpt);
  CHECK_THROWS_AS(part.train_sft(interrupted), ConfigError);
}
