// jobgen: corpus generation, staged training, generation and evaluation of
// the job-recommendation pipeline. One stage per invocation; stage order is
// enforced by prerequisite checks.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "jobgen/common/error.hpp"
#include "jobgen/pipeline/stages.hpp"

namespace {

using jobgen::pipeline::Pipeline;
using jobgen::pipeline::RunConfig;

enum ExitCode : int {
  kOk = 0,
  kOther = 1,
  kConfig = 2,
  kMissing = 3,
  kDivergence = 4,
};

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "Run configuration (JSON); defaults apply when omitted");
  cmd->add_option("--seed", o.seed, "Global seed, overrides the configuration");
  cmd->add_option("--out", o.out, "Output directory, overrides the configuration");
}

RunConfig load(const CommonOptions& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : jobgen::pipeline::load_run_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (!o.out.empty()) c.out = o.out;
  return c;
}

void print(const nlohmann::json& summary) { std::cout << summary.dump(2) << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generative job recommendation pipeline"};
  app.require_subcommand(1);
  CommonOptions common;

  auto* corpus = app.add_subcommand("corpus", "Write the synthetic datasets and their manifest");
  add_common(corpus, common);

  std::string stage;
  std::string resume;
  auto* train = app.add_subcommand("train", "Train one stage: sft, rmt, ppo or rec");
  add_common(train, common);
  train->add_option("stage", stage, "Stage")->required()->check(CLI::IsMember({"sft", "rmt", "ppo", "rec"}));
  train->add_option("--resume", resume, "Continue from this checkpoint");

  std::string source;
  std::size_t n = 0;
  std::string cv_file;
  auto* generate = app.add_subcommand("generate", "Generate JDs for CVs from the sft or ppo checkpoint");
  add_common(generate, common);
  generate->add_option("source", source, "Generator checkpoint")->required()->check(CLI::IsMember({"sft", "ppo"}));
  generate->add_option("--n", n, "Generations per CV (default: the largest count the configuration uses)");
  generate->add_option("--cvs", cv_file, "CV file, one JSON object per line (default: recommendation CVs)");

  std::string kind;
  auto* eval = app.add_subcommand("eval", "Evaluate: quality, rec, coldstart or gen-sweep");
  add_common(eval, common);
  eval->add_option("kind", kind, "Evaluation")
      ->required()
      ->check(CLI::IsMember({"quality", "rec", "coldstart", "gen-sweep"}));

  auto* pipeline = app.add_subcommand("pipeline", "Run every stage and evaluation in order");
  add_common(pipeline, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    Pipeline p(load(common));
    const std::optional<std::filesystem::path> resume_path =
        resume.empty() ? std::nullopt : std::optional<std::filesystem::path>(resume);
    if (corpus->parsed()) {
      print(p.corpus());
    } else if (train->parsed()) {
      if (stage == "sft") print(p.train_sft(resume_path));
      if (stage == "rmt") print(p.train_rmt(resume_path));
      if (stage == "ppo") print(p.train_ppo(resume_path));
      if (stage == "rec") print(p.train_rec(resume_path));
    } else if (generate->parsed()) {
      const std::optional<std::filesystem::path> cvs =
          cv_file.empty() ? std::nullopt : std::optional<std::filesystem::path>(cv_file);
      const auto summary = p.generate(source, n == 0 ? p.config().generation.max_n() : n, cvs);
      print(summary);
      const auto& warnings = summary["warnings"];
      for (const auto& w : warnings) std::cerr << "warning: " << w.get<std::string>() << '\n';
      if (!warnings.empty()) std::cerr << warnings.size() << " malformed CV line(s) skipped\n";
    } else if (eval->parsed()) {
      if (kind == "quality") print(p.eval_quality());
      if (kind == "rec") print(p.eval_rec());
      if (kind == "coldstart") print(p.eval_coldstart());
      if (kind == "gen-sweep") print(p.eval_gen_sweep());
    } else if (pipeline->parsed()) {
      print(p.run_all());
    }
  } catch (const jobgen::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const jobgen::MissingPrerequisite& e) {
    std::cerr << "refused: " << e.what() << '\n';
    return kMissing;
  } catch (const jobgen::DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return kDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
  return kOk;
}
