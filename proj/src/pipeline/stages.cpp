#include "jobgen/pipeline/stages.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "jobgen/common/error.hpp"
#include "jobgen/common/hash.hpp"
#include "jobgen/evaluation/tournament.hpp"

namespace jobgen::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

std::string rec_cell_name(recsys::PredictorKind predictor, const std::string& variant) {
  return "rec_" + recsys::to_string(predictor) + "_" + variant;
}

namespace {

constexpr recsys::PredictorKind kPredictors[] = {recsys::PredictorKind::mlp, recsys::PredictorKind::dot};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::trunc | std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f << text;
    if (!f) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

// Records of the latest fresh run in an append-only log, resumed segments
// included, without the start markers.
std::vector<json> read_latest_run(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw MissingPrerequisite(path.string());
  std::vector<json> records;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto r = json::parse(line);
    if (r.value("event", "") == "start") {
      if (!r.value("resume", false)) records.clear();
      continue;
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<ppo::RolloutInput> rollout_inputs(const corpus::World& world, std::span<const corpus::CVDoc> cvs,
                                              std::size_t max_prompt_len) {
  std::vector<ppo::RolloutInput> inputs;
  inputs.reserve(cvs.size());
  for (const auto& cv : cvs) {
    inputs.push_back({cv.tokens, corpus::assemble_prompt(world, cv.tokens, {}, max_prompt_len).tokens});
  }
  return inputs;
}

std::vector<corpus::PromptInstance> sft_instances(const corpus::World& world,
                                                  std::span<const corpus::SftExample> examples,
                                                  std::size_t max_prompt_len) {
  std::vector<corpus::PromptInstance> out;
  out.reserve(examples.size());
  // The JD does not count against the prompt budget.
  for (const auto& e : examples) {
    out.push_back(corpus::assemble_prompt(world, e.cv.tokens, e.jd.tokens, max_prompt_len + e.jd.tokens.size()));
  }
  return out;
}

// Distinct CVs of the recommendation splits in first-seen order.
std::vector<corpus::CVDoc> rec_cvs(const corpus::Datasets& d) {
  std::vector<corpus::CVDoc> cvs;
  std::set<std::uint64_t> seen;
  for (const auto* split : {&d.rec_train, &d.rec_val, &d.rec_test}) {
    for (const auto& e : *split) {
      if (seen.insert(e.cv.seeker_id).second) cvs.push_back(e.cv);
    }
  }
  return cvs;
}

struct LoadedCvs {
  std::vector<corpus::CVDoc> cvs;
  std::vector<std::string> warnings;
};

// One CV object per line. Lines that do not parse, or carry neither tokens
// nor skills, are skipped with a warning.
LoadedCvs read_cv_file(const fs::path& path, const corpus::World& world) {
  std::ifstream f(path);
  if (!f) throw MissingPrerequisite(path.string());
  LoadedCvs out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      auto cv = json::parse(line).get<corpus::CVDoc>();
      if (cv.tokens.empty()) {
        if (cv.skills.empty()) throw std::runtime_error("no tokens and no skills");
        cv.tokens = world.render_cv(cv);
      }
      for (TokenId t : cv.tokens) {
        if (t >= world.vocabulary().size()) throw std::runtime_error("token id out of range");
      }
      out.cvs.push_back(std::move(cv));
    } catch (const std::exception& e) {
      out.warnings.push_back("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

Pipeline::Pipeline(const RunConfig& config)
    : world_(corpus::SkillOntology::standard(), config.world, config.prompt),
      config_(resolve(config, world_)),
      layout_(config.out),
      checksum_(config_checksum(config_)) {}

const corpus::Datasets& Pipeline::datasets() {
  if (!datasets_) {
    require(layout_.corpus_dir() / "manifest.json");
    datasets_ = corpus::load_datasets(layout_.corpus_dir());
  }
  return *datasets_;
}

void Pipeline::require(const fs::path& artifact) const {
  if (!fs::exists(artifact)) throw MissingPrerequisite(artifact.string());
}

void Pipeline::require_complete(const fs::path& ckpt, std::size_t expected, const std::string& key) const {
  require(ckpt);
  const auto c = tensor::read_checkpoint(ckpt);
  if (c.meta.value(key, std::size_t{0}) < expected) {
    throw MissingPrerequisite(ckpt.string() + " (incomplete: " + key + " " + std::to_string(c.meta.value(key, 0)) +
                              " of " + std::to_string(expected) + ")");
  }
}

MetricsLog Pipeline::open_log(const std::string& name, bool resume) const {
  MetricsLog log(layout_.metrics(name), true);
  log.stamp("config", checksum_.substr(0, 16));
  log.write({{"event", "start"}, {"log", name}, {"resume", resume}});
  return log;
}

void Pipeline::write_report(const std::string& name, const json& report) const {
  write_text(layout_.report(name), report.dump(2) + "\n");
}

namespace {

// Resume checkpoints must come from the same configuration and stage.
tensor::Checkpoint read_resume(const fs::path& path, const std::string& role, const std::string& checksum) {
  auto ckpt = tensor::read_checkpoint(path);
  if (ckpt.role != role) {
    throw ConfigError(path.string() + ": expected a " + role + " checkpoint, found " + ckpt.role);
  }
  if (ckpt.meta.value("run_config", "") != checksum) {
    throw ConfigError(path.string() + ": written under a different configuration");
  }
  if (!tensor::has_optimizer_state(ckpt)) throw ConfigError(path.string() + ": no optimizer state to resume from");
  return ckpt;
}

}  // namespace

json Pipeline::corpus() {
  const auto dir = layout_.corpus_dir();
  auto data = corpus::make_datasets(world_, config_.datasets, stage_seed(config_, "corpus"));
  corpus::save_world(dir, world_);
  corpus::save_datasets(dir, data);
  save_run_config(layout_.root() / "config.json", config_);

  // The stored labels are re-derived from the ground-truth rule.
  std::size_t rec_mismatches = 0, pair_mismatches = 0, cold = 0;
  for (const auto* split : {&data.rec_train, &data.rec_val, &data.rec_test}) {
    for (const auto& e : *split) {
      if (world_.match_label(e.cv, e.jd) != e.label) ++rec_mismatches;
      if (e.cold) ++cold;
    }
  }
  for (const auto* split : {&data.sft_train, &data.sft_test}) {
    for (const auto& e : *split) {
      if (world_.match_label(e.cv, e.jd) != 1) ++pair_mismatches;
    }
  }
  for (const auto* split : {&data.rmt_train, &data.rmt_test}) {
    for (const auto& e : *split) {
      if (world_.match_label(e.cv, e.positive) != 1 || world_.match_label(e.cv, e.negative) != 0) ++pair_mismatches;
    }
  }

  json counts{{"sft_train", data.sft_train.size()}, {"sft_test", data.sft_test.size()},
              {"rmt_train", data.rmt_train.size()}, {"rmt_test", data.rmt_test.size()},
              {"rl_cvs", data.rl_cvs.size()},       {"rec_train", data.rec_train.size()},
              {"rec_val", data.rec_val.size()},     {"rec_test", data.rec_test.size()},
              {"rec_cold", cold},                   {"eval_cvs", data.eval_cvs.size()}};
  json files = json::object();
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().filename() != "manifest.json") paths.push_back(entry.path());
  }
  std::sort(paths.begin(), paths.end());
  for (const auto& p : paths) files[p.filename().string()] = sha256_file(p);

  json manifest{{"seed", stage_seed(config_, "corpus")},
                {"config", checksum_},
                {"counts", counts},
                {"files", files},
                {"vocab_size", world_.vocabulary().size()},
                {"label_recheck", {{"rec_mismatches", rec_mismatches}, {"pair_mismatches", pair_mismatches}}},
                {"label_noise", config_.datasets.label_noise}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");

  auto log = open_log("corpus", false);
  log.write({{"stage", "corpus"}, {"counts", counts}, {"label_recheck", manifest["label_recheck"]}});
  datasets_ = std::move(data);
  write_report("corpus", manifest);
  return manifest;
}

json Pipeline::train_sft(const std::optional<fs::path>& resume) {
  const auto& d = datasets();
  const auto train = sft_instances(world_, d.sft_train, config_.generation.max_prompt_len);
  const auto heldout = sft_instances(world_, d.sft_test, config_.generation.max_prompt_len);

  models::GeneratorModel model;
  tensor::OptimizerState state;
  alignment::TrainHooks hooks;
  if (resume) {
    const auto ckpt = read_resume(*resume, "generator", checksum_);
    model = models::GeneratorModel::from_checkpoint(ckpt);
    state = tensor::read_optimizer_state(ckpt);
    hooks.start_epoch = ckpt.meta.value("epoch", std::size_t{0});
    hooks.resume_state = &state;
  } else {
    model = models::GeneratorModel(config_.generator, stage_seed(config_, "sft.init"));
  }
  auto log = open_log("sft", resume.has_value());
  hooks.log = &log;
  const auto path = layout_.checkpoint("sft");
  hooks.on_epoch = [&](std::size_t epoch, const tensor::Optimizer& opt) {
    auto ckpt = model.to_checkpoint("generator");
    ckpt.meta["epoch"] = epoch;
    ckpt.meta["run_config"] = checksum_;
    tensor::add_optimizer_state(ckpt, opt.state());
    tensor::write_checkpoint(path, ckpt);
  };
  alignment::train_sft(model, train, heldout, config_.sft, hooks);

  // A run resumed without its fresh segment in this log has no initial score.
  const auto records = read_latest_run(layout_.metrics("sft"));
  const auto first = std::find_if(records.begin(), records.end(), [](const json& r) { return r.value("epoch", -1) == 0; });
  const double final = records.back()["heldout_perplexity"].get<double>();
  json report{{"epochs", config_.sft.epochs}, {"final_perplexity", final}, {"checkpoint", path.string()}};
  if (first != records.end()) {
    const double initial = (*first)["heldout_perplexity"].get<double>();
    report["initial_perplexity"] = initial;
    report["relative_drop"] = (initial - final) / initial;
  }
  write_report("sft", report);
  return report;
}

json Pipeline::train_rmt(const std::optional<fs::path>& resume) {
  const auto& d = datasets();
  models::RewardModel model;
  tensor::OptimizerState state;
  alignment::TrainHooks hooks;
  if (resume) {
    const auto ckpt = read_resume(*resume, "reward", checksum_);
    model = models::RewardModel::from_checkpoint(ckpt);
    state = tensor::read_optimizer_state(ckpt);
    hooks.start_epoch = ckpt.meta.value("epoch", std::size_t{0});
    hooks.resume_state = &state;
  } else {
    model = models::RewardModel(config_.reward_model, stage_seed(config_, "rmt.init"));
  }
  auto log = open_log("rmt", resume.has_value());
  hooks.log = &log;
  const auto path = layout_.checkpoint("rmt");
  hooks.on_epoch = [&](std::size_t epoch, const tensor::Optimizer& opt) {
    auto ckpt = model.to_checkpoint();
    ckpt.meta["epoch"] = epoch;
    ckpt.meta["run_config"] = checksum_;
    tensor::add_optimizer_state(ckpt, opt.state());
    tensor::write_checkpoint(path, ckpt);
  };
  const auto sampler = alignment::world_negative_sampler(world_, stage_seed(config_, "rmt.negatives"));
  alignment::train_reward(model, d.rmt_train, d.rmt_test, config_.rmt, hooks, sampler);

  const auto records = read_latest_run(layout_.metrics("rmt"));
  const auto first = std::find_if(records.begin(), records.end(), [](const json& r) { return r.value("epoch", -1) == 0; });
  json report{{"epochs", config_.rmt.epochs},
              {"initial_accuracy", first == records.end() ? json() : (*first)["heldout_accuracy"]},
              {"final_accuracy", records.back()["heldout_accuracy"]},
              {"heldout_pairs", d.rmt_test.size()},
              {"checkpoint", path.string()}};
  write_report("rmt", report);
  return report;
}

json Pipeline::train_ppo(const std::optional<fs::path>& resume) {
  const auto sft_path = layout_.checkpoint("sft");
  const auto rmt_path = layout_.checkpoint("rmt");
  require_complete(sft_path, config_.sft.epochs, "epoch");
  require_complete(rmt_path, config_.rmt.epochs, "epoch");
  const auto& d = datasets();
  const auto reference = models::GeneratorModel::from_checkpoint(tensor::read_checkpoint(sft_path));
  const auto reward = models::RewardModel::from_checkpoint(tensor::read_checkpoint(rmt_path));

  const auto actor_path = layout_.checkpoint("ppo");
  const auto critic_path = layout_.checkpoint("critic");
  models::GeneratorModel actor;
  models::CriticModel critic;
  tensor::OptimizerState actor_state, critic_state;
  ppo::PPOHooks hooks;
  if (resume) {
    const auto a = read_resume(*resume, "actor", checksum_);
    const auto c = read_resume(critic_path, "critic", checksum_);
    const auto it = a.meta.value("iteration", std::size_t{0});
    if (c.meta.value("iteration", std::size_t{0}) != it) {
      throw ConfigError(critic_path.string() + " does not belong to iteration " + std::to_string(it));
    }
    actor = models::GeneratorModel::from_checkpoint(a);
    critic = models::CriticModel::from_checkpoint(c);
    actor_state = tensor::read_optimizer_state(a);
    critic_state = tensor::read_optimizer_state(c);
    hooks.start_iteration = it;
    hooks.actor_state = &actor_state;
    hooks.critic_state = &critic_state;
  } else {
    actor = reference;
    critic = models::CriticModel::from_reward(reward);
  }
  auto log = open_log("ppo", resume.has_value());
  hooks.log = &log;
  hooks.on_iteration = [&](std::size_t iteration, const tensor::Optimizer& aopt, const tensor::Optimizer& copt) {
    auto a = actor.to_checkpoint("actor");
    a.meta["iteration"] = iteration;
    a.meta["run_config"] = checksum_;
    tensor::add_optimizer_state(a, aopt.state());
    auto c = critic.to_checkpoint();
    c.meta["iteration"] = iteration;
    c.meta["run_config"] = checksum_;
    tensor::add_optimizer_state(c, copt.state());
    // Critic first: a crash between the writes leaves the actor one iteration
    // behind, which the resume check reports.
    tensor::write_checkpoint(critic_path, c);
    tensor::write_checkpoint(actor_path, a);
  };
  const auto inputs = rollout_inputs(world_, d.rl_cvs, config_.generation.max_prompt_len);
  ppo::ppo_train(actor, critic, reference, reward, inputs, config_.ppo, hooks);
  if (config_.ppo.iterations == 0) {
    auto a = actor.to_checkpoint("actor");
    a.meta["iteration"] = 0;
    a.meta["run_config"] = checksum_;
    tensor::write_checkpoint(actor_path, a);
  }

  // Paired comparison on held-out CVs: both policies sample input i from the
  // same stream.
  const auto eval_inputs = rollout_inputs(world_, d.eval_cvs, config_.generation.max_prompt_len);
  const auto seed = stage_seed(config_, "eval.policy");
  const auto before = ppo::evaluate_policy(reference, reference, reward, eval_inputs, config_.ppo.sampling, seed);
  const auto after = ppo::evaluate_policy(actor, reference, reward, eval_inputs, config_.ppo.sampling, seed);
  std::size_t wins = 0;
  for (std::size_t i = 0; i < after.scores.size(); ++i) {
    if (after.scores[i] > before.scores[i]) ++wins;
  }
  json report{{"iterations", config_.ppo.iterations},
              {"old_policy", ppo::to_string(config_.ppo.old_policy)},
              {"eval_cvs", eval_inputs.size()},
              {"sft_mean_score", before.mean_score},
              {"ppo_mean_score", after.mean_score},
              {"ppo_mean_kl", after.mean_kl},
              {"kl_ceiling", config_.ppo.kl_ceiling},
              {"paired_wins", wins},
              {"improved", after.mean_score > before.mean_score},
              {"within_ceiling", after.mean_kl <= config_.ppo.kl_ceiling},
              {"checkpoint", actor_path.string()}};
  auto eval_log = open_log("ppo_eval", resume.has_value());
  eval_log.write({{"stage", "ppo_eval"},
                  {"sft_mean_score", before.mean_score},
                  {"ppo_mean_score", after.mean_score},
                  {"ppo_mean_kl", after.mean_kl},
                  {"paired_wins", wins}});
  write_report("ppo", report);
  return report;
}

json Pipeline::generate(const std::string& source, std::size_t n, const std::optional<fs::path>& cv_file) {
  if (n == 0) throw ConfigError("generate: n must be positive");
  fs::path ckpt_path;
  if (source == kSftSource) {
    ckpt_path = layout_.checkpoint("sft");
    require_complete(ckpt_path, config_.sft.epochs, "epoch");
  } else if (source == kPpoSource) {
    ckpt_path = layout_.checkpoint("ppo");
    require_complete(ckpt_path, config_.ppo.iterations, "iteration");
  } else {
    throw ConfigError("generate: unknown source '" + source + "' (expected sft or ppo)");
  }
  const auto model = models::GeneratorModel::from_checkpoint(tensor::read_checkpoint(ckpt_path));

  std::vector<corpus::CVDoc> cvs;
  std::vector<std::string> warnings;
  if (cv_file) {
    auto loaded = read_cv_file(*cv_file, world_);
    cvs = std::move(loaded.cvs);
    warnings = std::move(loaded.warnings);
  } else {
    cvs = rec_cvs(datasets());
  }
  const auto rows = recsys::generate_for_cvs(model, world_, cvs, n, config_.generation.sampling,
                                             stage_seed(config_, "generate"), config_.generation.max_prompt_len);
  const auto path = layout_.generations(source);
  recsys::save_generations(path, rows);
  caches_.erase(source);

  std::size_t terminated = 0, tokens = 0;
  for (const auto& r : rows) {
    if (r.hit_eos) ++terminated;
    tokens += r.tokens.size();
  }
  json summary{{"source", source},
               {"n", n},
               {"cvs", cvs.size()},
               {"records", rows.size()},
               {"terminated_fraction", rows.empty() ? 0.0 : static_cast<double>(terminated) / rows.size()},
               {"mean_tokens", rows.empty() ? 0.0 : static_cast<double>(tokens) / rows.size()},
               {"sha256", sha256_file(path)},
               {"path", path.string()},
               {"warnings", warnings}};
  auto log = open_log("generate_" + source, false);
  log.write({{"stage", "generate"}, {"source", source}, {"n", n}, {"records", rows.size()}, {"sha256", summary["sha256"]}});
  write_report("generate_" + source, summary);
  return summary;
}

std::vector<recsys::RecInstance> Pipeline::rec_split(const std::vector<corpus::RecExample>& split,
                                                     const std::string& variant, std::size_t n) {
  if (variant == "base") return recsys::make_instances(split, nullptr, 0);
  auto it = caches_.find(variant);
  if (it == caches_.end()) {
    const auto path = layout_.generations(variant);
    require(path);
    auto loaded = recsys::load_generations(path);
    it = caches_.emplace(variant, recsys::GenerationCache(loaded.rows)).first;
  }
  return recsys::make_instances(split, &it->second, n);
}

recsys::RecModel Pipeline::train_rec_cell(recsys::PredictorKind predictor, const std::string& variant, std::size_t n,
                                          const std::string& name, const recsys::RecProgress* resume) {
  const auto& d = datasets();
  const auto train = rec_split(d.rec_train, variant, n);
  const auto val = rec_split(d.rec_val, variant, n);
  const auto path = layout_.checkpoint(name);

  recsys::RecModel model;
  if (resume) {
    model = recsys::RecModel::from_checkpoint(tensor::read_checkpoint(path));
  } else {
    auto mc = config_.recommender;
    mc.predictor = predictor;
    mc.enhanced = variant != "base";
    model = recsys::RecModel(mc, stage_seed(config_, "rec.init"));
    if (mc.enhanced && config_.rec.warm_start) model.warm_start(load_rec_cell(predictor, "base"));
  }
  auto training = config_.rec;
  if (variant != "base" && training.warm_start) training.learning_rate = training.warm_start_learning_rate;
  auto cell_meta = [&](tensor::Checkpoint& ckpt) {
    ckpt.meta["cell"] = name;
    ckpt.meta["variant"] = variant;
    ckpt.meta["n"] = n;
    ckpt.meta["run_config"] = checksum_;
  };
  auto log = open_log(name, resume != nullptr);
  recsys::RecHooks hooks;
  hooks.log = &log;
  hooks.resume = resume;
  hooks.on_epoch = [&](const recsys::RecProgress& progress) {
    auto ckpt = model.to_checkpoint();
    cell_meta(ckpt);
    ckpt.meta["complete"] = false;
    recsys::add_progress(ckpt, progress);
    tensor::write_checkpoint(path, ckpt);
  };
  const auto result = recsys::train_rec(model, train, val, training, hooks);
  auto ckpt = model.to_checkpoint();
  cell_meta(ckpt);
  ckpt.meta["complete"] = true;
  ckpt.meta["best_epoch"] = result.best_epoch;
  ckpt.meta["best_val_auc"] = result.best_val_auc;
  tensor::write_checkpoint(path, ckpt);
  return model;
}

json Pipeline::train_rec(const std::optional<fs::path>& resume) {
  std::string resume_cell;
  std::optional<recsys::RecProgress> progress;
  if (resume) {
    const auto ckpt = tensor::read_checkpoint(*resume);
    if (ckpt.role != "recommender") throw ConfigError(resume->string() + ": not a recommender checkpoint");
    if (ckpt.meta.value("run_config", "") != checksum_) {
      throw ConfigError(resume->string() + ": written under a different configuration");
    }
    resume_cell = ckpt.meta.value("cell", "");
    if (ckpt.meta.value("complete", false) || !recsys::has_progress(ckpt)) {
      throw ConfigError(resume->string() + ": cell " + resume_cell + " is already complete");
    }
    if (fs::weakly_canonical(*resume) != fs::weakly_canonical(layout_.checkpoint(resume_cell))) {
      // Training continues in place, so the state must sit where the cell lives.
      fs::create_directories(layout_.checkpoint(resume_cell).parent_path());
      fs::copy_file(*resume, layout_.checkpoint(resume_cell), fs::copy_options::overwrite_existing);
    }
    progress = recsys::read_progress(ckpt);
  }

  json cells = json::array();
  for (auto predictor : kPredictors) {
    for (const auto& variant : kRecVariants) {
      const auto name = rec_cell_name(predictor, variant);
      const auto path = layout_.checkpoint(name);
      if (resume && name != resume_cell && fs::exists(path) &&
          tensor::read_checkpoint(path).meta.value("complete", false)) {
        cells.push_back({{"cell", name}, {"skipped", "complete"}});
        continue;
      }
      const auto* p = name == resume_cell && progress ? &*progress : nullptr;
      train_rec_cell(predictor, variant, variant == "base" ? 0 : config_.generation.n, name, p);
      const auto meta = tensor::read_checkpoint(path).meta;
      cells.push_back({{"cell", name}, {"best_epoch", meta["best_epoch"]}, {"best_val_auc", meta["best_val_auc"]}});
    }
  }
  json report{{"n", config_.generation.n}, {"cells", cells}};
  write_report("train_rec", report);
  return report;
}

recsys::RecModel Pipeline::load_rec_cell(recsys::PredictorKind predictor, const std::string& variant) const {
  const auto path = layout_.checkpoint(rec_cell_name(predictor, variant));
  require(path);
  const auto ckpt = tensor::read_checkpoint(path);
  if (!ckpt.meta.value("complete", false)) throw MissingPrerequisite(path.string() + " (training incomplete)");
  return recsys::RecModel::from_checkpoint(ckpt);
}

json Pipeline::eval_rec() {
  const auto& d = datasets();
  json rows = json::array();
  std::map<std::string, double> auc;
  auto log = open_log("eval_rec", false);
  for (auto predictor : kPredictors) {
    for (const auto& variant : kRecVariants) {
      const auto model = load_rec_cell(predictor, variant);
      const auto test = rec_split(d.rec_test, variant, variant == "base" ? 0 : config_.generation.n);
      const auto m = recsys::evaluate(model, test);
      const auto name = rec_cell_name(predictor, variant);
      auc[name] = m.auc;
      json row{{"predictor", recsys::to_string(predictor)}, {"variant", variant}, {"enhanced", variant != "base"}};
      row["auc"] = m.auc;
      row["logloss"] = m.logloss;
      row["count"] = m.count;
      log.write({{"stage", "eval_rec"}, {"cell", name}, {"auc", m.auc}, {"logloss", m.logloss}});
      rows.push_back(row);
    }
  }
  json gains = json::object();
  for (auto predictor : kPredictors) {
    const auto p = recsys::to_string(predictor);
    const double base = auc[rec_cell_name(predictor, "base")];
    const double sft = auc[rec_cell_name(predictor, kSftSource)];
    const double ppo = auc[rec_cell_name(predictor, kPpoSource)];
    gains[p] = {{"sft_gain", sft - base}, {"ppo_gain", ppo - base}, {"ppo_over_sft", ppo - sft}};
  }
  json report{{"n", config_.generation.n}, {"cells", rows}, {"enhancement", gains}};
  write_report("eval_rec", report);
  return report;
}

json Pipeline::eval_coldstart() {
  const auto& d = datasets();
  json rows = json::array();
  auto log = open_log("eval_coldstart", false);
  std::map<std::string, evaluation::ColdStartReport> slices;
  for (auto predictor : kPredictors) {
    for (const auto& variant : kRecVariants) {
      const auto model = load_rec_cell(predictor, variant);
      const auto test = rec_split(d.rec_test, variant, variant == "base" ? 0 : config_.generation.n);
      const auto probs = recsys::predict(model, test);
      const auto slice = evaluation::cold_start_slice(probs, d.rec_test);
      const auto name = rec_cell_name(predictor, variant);
      slices[name] = slice;
      log.write({{"stage", "eval_coldstart"}, {"cell", name}, {"full", slice.full}, {"cold", slice.cold}});
      rows.push_back({{"predictor", recsys::to_string(predictor)}, {"variant", variant}, {"full", slice.full},
                      {"cold", slice.cold}});
    }
  }
  // Enhancement gain on the cold slice against the gain on the full split.
  json gaps = json::object();
  for (auto predictor : kPredictors) {
    const auto& base = slices[rec_cell_name(predictor, "base")];
    json per = json::object();
    for (const std::string variant : {kSftSource, kPpoSource}) {
      const auto& e = slices[rec_cell_name(predictor, variant)];
      const double full_gap = e.full.auc - base.full.auc;
      const double cold_gap = e.cold.auc - base.cold.auc;
      per[variant] = {{"full_gap", full_gap}, {"cold_gap", cold_gap}, {"cold_ge_full", cold_gap >= full_gap}};
    }
    gaps[recsys::to_string(predictor)] = per;
  }
  json report{{"cold_seekers_in_train", evaluation::cold_seekers_in_train(d.rec_train, d.rec_test)},
              {"cells", rows},
              {"gaps", gaps}};
  write_report("eval_coldstart", report);
  return report;
}

json Pipeline::eval_gen_sweep() {
  const auto predictor = config_.generation.sweep_predictor;
  const auto& d = datasets();
  json rows = json::array();
  auto log = open_log("eval_gen_sweep", false);
  for (std::size_t n : config_.generation.sweep) {
    recsys::RecModel model;
    if (n == config_.generation.n) {
      model = load_rec_cell(predictor, kPpoSource);
    } else {
      const auto name = "sweep_" + recsys::to_string(predictor) + "_n" + std::to_string(n);
      model = train_rec_cell(predictor, kPpoSource, n, name, nullptr);
    }
    const auto test = rec_split(d.rec_test, kPpoSource, n);
    const auto m = recsys::evaluate(model, test);
    log.write({{"stage", "eval_gen_sweep"}, {"n", n}, {"auc", m.auc}, {"logloss", m.logloss}});
    rows.push_back({{"n", n}, {"auc", m.auc}, {"logloss", m.logloss}});
  }
  json report{{"predictor", recsys::to_string(predictor)}, {"source", kPpoSource}, {"rows", rows}};
  write_report("eval_gen_sweep", report);
  return report;
}

json Pipeline::eval_quality() {
  const auto sft_path = layout_.checkpoint("sft");
  const auto ppo_path = layout_.checkpoint("ppo");
  require_complete(sft_path, config_.sft.epochs, "epoch");
  require_complete(ppo_path, config_.ppo.iterations, "iteration");
  const auto& d = datasets();
  const auto sft = models::GeneratorModel::from_checkpoint(tensor::read_checkpoint(sft_path));
  const auto ppo_model = models::GeneratorModel::from_checkpoint(tensor::read_checkpoint(ppo_path));

  // Both models sample for a CV from the same stream.
  const auto seed = stage_seed(config_, "eval.quality");
  const auto ppo_rows = recsys::generate_for_cvs(ppo_model, world_, d.eval_cvs, 1, config_.generation.sampling, seed,
                                                 config_.generation.max_prompt_len);
  const auto sft_rows = recsys::generate_for_cvs(sft, world_, d.eval_cvs, 1, config_.generation.sampling, seed,
                                                 config_.generation.max_prompt_len);
  std::vector<Tokens> ppo_out, sft_out;
  for (const auto& r : ppo_rows) ppo_out.push_back(r.tokens);
  for (const auto& r : sft_rows) sft_out.push_back(r.tokens);

  // An empty generation cannot be judged; it is replaced by the bare EOS
  // token, which the rubric scores as a JD with no content.
  for (auto* outs : {&ppo_out, &sft_out}) {
    for (auto& t : *outs) {
      if (t.empty()) t.push_back(kEosToken);
    }
  }
  const auto judge = evaluation::rubric_judge(world_, config_.rubric);
  const auto report = evaluation::tournament(d.eval_cvs, ppo_out, sft_out, judge);
  const auto intervals = evaluation::bootstrap_intervals(report.outcomes, config_.quality.bootstrap_resamples,
                                                         config_.quality.interval_level,
                                                         stage_seed(config_, "eval.bootstrap"));

  auto rubric_means = [&](const std::vector<Tokens>& outs) {
    std::vector<double> detail, relevance, conciseness;
    for (std::size_t i = 0; i < outs.size(); ++i) {
      const auto s = evaluation::rubric_scores(world_, d.eval_cvs[i], outs[i], config_.rubric);
      detail.push_back(s.detail);
      relevance.push_back(s.relevance);
      conciseness.push_back(s.conciseness);
    }
    return json{{"detail", mean(detail)}, {"relevance", mean(relevance)}, {"conciseness", mean(conciseness)}};
  };
  json summary = report;
  summary.erase("outcomes");
  json out{{"model_a", kPpoSource},
           {"model_b", kSftSource},
           {"tournament", summary},
           {"intervals", intervals},
           {"interval_level", config_.quality.interval_level},
           {"rubric_means", {{kPpoSource, rubric_means(ppo_out)}, {kSftSource, rubric_means(sft_out)}}}};
  auto log = open_log("eval_quality", false);
  log.write({{"stage", "eval_quality"}, {"tournament", summary}, {"intervals", intervals}});
  write_report("eval_quality", out);
  return out;
}

json Pipeline::run_all() {
  json out;
  out["corpus"] = corpus()["counts"];
  out["sft"] = train_sft();
  out["rmt"] = train_rmt();
  out["ppo"] = train_ppo();
  const auto n = config_.generation.max_n();
  out["generate"] = {{kSftSource, generate(kSftSource, n)}, {kPpoSource, generate(kPpoSource, n)}};
  out["train_rec"] = train_rec();
  out["eval_rec"] = eval_rec();
  out["eval_coldstart"] = eval_coldstart();
  out["eval_gen_sweep"] = eval_gen_sweep();
  out["eval_quality"] = eval_quality();
  write_report("pipeline", out);
  return out;
}

}  // namespace jobgen::pipeline
