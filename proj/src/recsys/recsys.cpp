#include "jobgen/recsys/recsys.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

#include "jobgen/alignment/trainer.hpp"
#include "jobgen/common/error.hpp"
#include "jobgen/corpus/prompt.hpp"

namespace jobgen::recsys {

using tensor::Shape;
using tensor::Tensor;

std::string to_string(PredictorKind kind) { return kind == PredictorKind::dot ? "dot" : "mlp"; }

PredictorKind predictor_kind_from_string(const std::string& s) {
  if (s == "mlp") return PredictorKind::mlp;
  if (s == "dot") return PredictorKind::dot;
  throw ConfigError("unknown predictor '" + s + "' (expected mlp or dot)");
}

void RecModelConfig::validate() const {
  encoder.validate();
  if (hidden == 0) throw ConfigError("rec model: hidden width must be positive");
  if (predictor == PredictorKind::dot && enhanced && identity_fusion_init && hidden < 2 * encoder.width) {
    throw ConfigError("rec model: identity fusion init needs hidden >= 2 * encoder width");
  }
}

void to_json(nlohmann::json& j, const RecModelConfig& c) {
  j = nlohmann::json{{"encoder", c.encoder},
                     {"predictor", to_string(c.predictor)},
                     {"enhanced", c.enhanced},
                     {"hidden", c.hidden},
                     {"twin_encoder", c.twin_encoder},
                     {"identity_fusion_init", c.identity_fusion_init}};
}

void from_json(const nlohmann::json& j, RecModelConfig& c) {
  RecModelConfig d;
  c.encoder = j.value("encoder", d.encoder);
  c.predictor = predictor_kind_from_string(j.value("predictor", to_string(d.predictor)));
  c.enhanced = j.value("enhanced", d.enhanced);
  c.hidden = j.value("hidden", d.hidden);
  c.twin_encoder = j.value("twin_encoder", d.twin_encoder);
  c.identity_fusion_init = j.value("identity_fusion_init", d.identity_fusion_init);
}

Var fuse_generated(std::span<const Var> embeddings) {
  if (embeddings.empty()) throw ConfigError("fuse_generated: no generated embeddings");
  Var total = embeddings[0];
  for (std::size_t i = 1; i < embeddings.size(); ++i) {
    if (embeddings[i].value().shape() != total.value().shape()) {
      throw ShapeError("fuse_generated: embedding widths differ");
    }
    total = add(total, embeddings[i]);
  }
  return scale(total, 1.0 / static_cast<double>(embeddings.size()));
}

std::vector<double> fuse_generated(std::span<const std::vector<double>> embeddings) {
  if (embeddings.empty()) throw ConfigError("fuse_generated: no generated embeddings");
  std::vector<double> out(embeddings[0].size(), 0.0);
  for (const auto& e : embeddings) {
    if (e.size() != out.size()) throw ShapeError("fuse_generated: embedding widths differ");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += e[i];
  }
  for (double& v : out) v /= static_cast<double>(embeddings.size());
  return out;
}

RecModel::RecModel(const RecModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  cv_encoder_ = models::TransformerBody(store_, config_.encoder, "encoder.", rng);
  if (config_.twin_encoder) jd_encoder_ = models::TransformerBody(store_, config_.encoder, "jd_encoder.", rng);
  const std::size_t w = config_.encoder.width;
  if (config_.predictor == PredictorKind::mlp) {
    head_ = add_mlp("head.", (config_.enhanced ? 3 : 2) * w, 1, rng);
  } else if (config_.enhanced) {
    head_ = add_mlp("fusion.", 2 * w, w, rng);
    if (config_.identity_fusion_init) {
      // relu(c) - relu(-c) through the first 2w hidden units.
      auto& w1 = store_[head_.w1].value;
      auto& w2 = store_[head_.w2].value;
      const std::size_t h = config_.hidden;
      for (double& v : w1.data()) v *= config_.encoder.init_std;
      for (double& v : w2.data()) v *= config_.encoder.init_std;
      for (std::size_t i = 0; i < w; ++i) {
        w1.data()[i * h + i] += 1.0;
        w1.data()[i * h + w + i] -= 1.0;
        w2.data()[i * w + i] += 1.0;
        w2.data()[(w + i) * w + i] -= 1.0;
      }
    }
  }
}

void RecModel::warm_start(const RecModel& base) {
  if (base.config_.enhanced) throw ConfigError("warm_start: the source must be a base model");
  if (base.config_.predictor != config_.predictor || base.config_.twin_encoder != config_.twin_encoder ||
      nlohmann::json(base.config_.encoder) != nlohmann::json(config_.encoder) ||
      base.config_.hidden != config_.hidden) {
    throw ConfigError("warm_start: predictor, encoder and hidden width must match");
  }
  for (const auto& p : base.store_.all()) {
    if (p.name.rfind("encoder.", 0) == 0 || p.name.rfind("jd_encoder.", 0) == 0) store_.get(p.name).value = p.value;
  }
  if (config_.predictor != PredictorKind::mlp) return;
  const auto& from = base.store_[base.head_.w1].value;
  auto& to = store_[head_.w1].value;
  // Rows of w1 follow the input order [c; j; j'].
  std::fill(to.data().begin(), to.data().end(), 0.0);
  std::copy(from.data().begin(), from.data().end(), to.data().begin());
  store_[head_.b1].value = base.store_[base.head_.b1].value;
  store_[head_.w2].value = base.store_[base.head_.w2].value;
  store_[head_.b2].value = base.store_[base.head_.b2].value;
}

RecModel::Mlp RecModel::add_mlp(const std::string& prefix, std::size_t in, std::size_t out, Rng& rng) {
  auto init = [&](std::size_t rows, std::size_t cols) {
    Tensor t(Shape{rows, cols});
    const double std = 1.0 / std::sqrt(static_cast<double>(rows));
    for (double& v : t.data()) v = rng.normal(0.0, std);
    return t;
  };
  Mlp m;
  m.w1 = store_.add(prefix + "w1", init(in, config_.hidden));
  m.b1 = store_.add(prefix + "b1", Tensor(Shape{config_.hidden}, 0.0));
  m.w2 = store_.add(prefix + "w2", init(config_.hidden, out));
  m.b2 = store_.add(prefix + "b2", Tensor(Shape{out}, 0.0));
  return m;
}

Var RecModel::mlp(Tape& tape, const Mlp& m, Var x) const {
  Var h = relu(models::linear(tape, store_, x, m.w1, m.b1));
  return models::linear(tape, store_, h, m.w2, m.b2);
}

Var RecModel::embed_cv(Tape& tape, std::span<const TokenId> cv, Rng* dropout_rng) const {
  const auto content = strip_padding(cv);
  if (content.empty()) throw ShapeError("recommender: empty CV");
  return mean_rows(cv_encoder_.forward(tape, store_, content, /*causal=*/false, dropout_rng));
}

Var RecModel::embed_jd(Tape& tape, std::span<const TokenId> jd, Rng* dropout_rng) const {
  const auto content = strip_padding(jd);
  if (content.empty()) throw ShapeError("recommender: empty JD");
  const auto& body = config_.twin_encoder ? jd_encoder_ : cv_encoder_;
  return mean_rows(body.forward(tape, store_, content, /*causal=*/false, dropout_rng));
}

Var RecModel::base_logit(Tape& tape, Var c, Var j) const {
  if (config_.predictor == PredictorKind::dot) return sum(multiply(c, j));
  if (config_.enhanced) throw ConfigError("recommender: mlp head was built for enhanced input");
  const std::array<Var, 2> parts{c, j};
  return sum(mlp(tape, head_, concat_last(parts)));
}

Var RecModel::enhanced_logit(Tape& tape, Var c, Var j, Var j_generated) const {
  if (!config_.enhanced) throw ConfigError("recommender: model was built without enhancement");
  if (config_.predictor == PredictorKind::mlp) {
    const std::array<Var, 3> parts{c, j, j_generated};
    return sum(mlp(tape, head_, concat_last(parts)));
  }
  const std::array<Var, 2> parts{c, j_generated};
  Var c_enhanced = mlp(tape, head_, concat_last(parts));
  return sum(multiply(c_enhanced, j));
}

Var RecModel::logit(Tape& tape, const RecInstance& x, Rng* dropout_rng) const {
  Var c = embed_cv(tape, x.cv, dropout_rng);
  Var j = embed_jd(tape, x.jd, dropout_rng);
  if (!config_.enhanced) return base_logit(tape, c, j);
  if (x.generated.empty()) throw ConfigError("recommender: enhanced scoring needs at least one generated JD");
  std::vector<Var> gen;
  gen.reserve(x.generated.size());
  for (const auto& g : x.generated) gen.push_back(embed_jd(tape, g, dropout_rng));
  return enhanced_logit(tape, c, j, fuse_generated(gen));
}

double RecModel::probability(const RecInstance& x) const {
  Tape tape;
  return 1.0 / (1.0 + std::exp(-logit(tape, x).value().item()));
}

tensor::Checkpoint RecModel::to_checkpoint() const {
  tensor::Checkpoint ckpt;
  ckpt.role = "recommender";
  ckpt.meta["config"] = config_;
  ckpt.add_store(store_);
  return ckpt;
}

RecModel RecModel::from_checkpoint(const tensor::Checkpoint& ckpt) {
  if (ckpt.role != "recommender") {
    throw ConfigError("expected a recommender checkpoint, found role '" + ckpt.role + "'");
  }
  RecModel m(ckpt.meta.at("config").get<RecModelConfig>(), 0);
  ckpt.load_store(m.store_);
  return m;
}

Var bce_loss(Var logit, int label) {
  if (label != 0 && label != 1) throw ConfigError("bce_loss: label must be 0 or 1");
  return scale(sum(log_sigmoid(scale(logit, label ? 1.0 : -1.0))), -1.0);
}

std::vector<double> predict(const RecModel& model, std::span<const RecInstance> data) {
  std::vector<double> p;
  p.reserve(data.size());
  for (const auto& x : data) p.push_back(model.probability(x));
  return p;
}

evaluation::RecMetrics evaluate(const RecModel& model, std::span<const RecInstance> data) {
  const auto p = predict(model, data);
  std::vector<int> z;
  z.reserve(data.size());
  for (const auto& x : data) z.push_back(x.label);
  return evaluation::rec_metrics(p, z);
}

void RecTrainConfig::validate() const {
  if (epochs == 0 || batch_size == 0) throw ConfigError("rec training: epochs and batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("rec training: learning_rate must be positive");
  if (!(clip_norm >= 0.0)) throw ConfigError("rec training: clip_norm must be non-negative");
  if (patience == 0) throw ConfigError("rec training: patience must be positive");
  if (!(warm_start_learning_rate > 0.0)) throw ConfigError("rec training: warm_start_learning_rate must be positive");
}

void to_json(nlohmann::json& j, const RecTrainConfig& c) {
  j = nlohmann::json{{"epochs", c.epochs},       {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
                     {"clip_norm", c.clip_norm}, {"patience", c.patience},     {"seed", c.seed},
                     {"warm_start", c.warm_start}, {"warm_start_learning_rate", c.warm_start_learning_rate}};
}

void from_json(const nlohmann::json& j, RecTrainConfig& c) {
  RecTrainConfig d;
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.clip_norm = j.value("clip_norm", d.clip_norm);
  c.patience = j.value("patience", d.patience);
  c.seed = j.value("seed", d.seed);
  c.warm_start = j.value("warm_start", d.warm_start);
  c.warm_start_learning_rate = j.value("warm_start_learning_rate", d.warm_start_learning_rate);
}

namespace {

nlohmann::json epoch_json(const RecEpoch& e) {
  return {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_auc", e.val_auc}, {"val_logloss", e.val_logloss}};
}

std::vector<Tensor> snapshot(const tensor::ParameterStore& store) {
  std::vector<Tensor> out;
  for (const auto& p : store.all()) out.push_back(p.value);
  return out;
}

void restore(tensor::ParameterStore& store, const std::vector<Tensor>& values) {
  if (values.size() != store.size()) throw ConfigError("rec training: snapshot does not match the model");
  for (std::size_t i = 0; i < values.size(); ++i) store[i].value = values[i];
}

}  // namespace

void add_progress(tensor::Checkpoint& ckpt, const RecProgress& progress) {
  tensor::add_optimizer_state(ckpt, progress.optimizer);
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : progress.result.epochs) epochs.push_back(epoch_json(e));
  ckpt.meta["progress"] = {{"epoch", progress.epoch},
                           {"epochs", epochs},
                           {"best_epoch", progress.result.best_epoch},
                           {"best_val_auc", progress.result.best_val_auc},
                           {"stale_epochs", progress.stale_epochs},
                           {"stopped", progress.stopped},
                           {"best_count", progress.best_values.size()}};
  for (std::size_t i = 0; i < progress.best_values.size(); ++i) {
    ckpt.tensors.emplace_back("best." + std::to_string(i), progress.best_values[i]);
  }
}

bool has_progress(const tensor::Checkpoint& ckpt) { return ckpt.meta.contains("progress"); }

RecProgress read_progress(const tensor::Checkpoint& ckpt) {
  if (!has_progress(ckpt)) throw ConfigError("checkpoint has no rec training progress");
  const auto& m = ckpt.meta.at("progress");
  RecProgress p;
  p.epoch = m.at("epoch").get<std::size_t>();
  p.optimizer = tensor::read_optimizer_state(ckpt);
  for (const auto& e : m.at("epochs")) {
    p.result.epochs.push_back({e.at("epoch").get<std::size_t>(), e.at("train_loss").get<double>(),
                               e.at("val_auc").get<double>(), e.at("val_logloss").get<double>()});
  }
  p.result.best_epoch = m.at("best_epoch").get<std::size_t>();
  p.result.best_val_auc = m.at("best_val_auc").get<double>();
  p.stale_epochs = m.at("stale_epochs").get<std::size_t>();
  p.stopped = m.at("stopped").get<bool>();
  const auto n = m.at("best_count").get<std::size_t>();
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor* t = ckpt.find("best." + std::to_string(i));
    if (!t) throw ConfigError("checkpoint is missing best." + std::to_string(i));
    p.best_values.push_back(*t);
  }
  return p;
}

RecTrainResult train_rec(RecModel& model, std::span<const RecInstance> train, std::span<const RecInstance> val,
                         const RecTrainConfig& config, const RecHooks& hooks) {
  config.validate();
  if (train.empty() || val.empty()) throw ConfigError("train_rec: training and validation sets must be nonempty");
  tensor::OptimizerConfig oc;
  oc.learning_rate = config.learning_rate;
  oc.clip_norm = config.clip_norm;
  tensor::Optimizer optimizer(oc);

  RecProgress progress;
  if (hooks.resume) {
    progress = *hooks.resume;
    optimizer.state() = progress.optimizer;
  } else {
    const auto m = evaluate(model, val);
    progress.result.best_val_auc = m.auc;
    progress.best_values = snapshot(model.parameters());
    if (hooks.log) hooks.log->write({{"stage", "rec"}, {"epoch", 0}, {"val_auc", m.auc}, {"val_logloss", m.logloss}});
  }
  const std::uint64_t dropout_seed = derive_seed(config.seed, "dropout");
  while (!progress.stopped && progress.epoch < config.epochs) {
    const std::size_t epoch = progress.epoch;
    const auto order = alignment::epoch_order(train.size(), config.seed, epoch);
    double loss_sum = 0.0;
    std::size_t step = 0;
    for (auto batch : alignment::batches(order, config.batch_size)) {
      Rng dropout(derive_seed(derive_seed(dropout_seed, epoch), step));
      const auto r = alignment::minibatch_step(model.parameters(), optimizer, batch, [&](std::size_t i, Tape& tape) {
        return bce_loss(model.logit(tape, train[i], &dropout), train[i].label);
      });
      loss_sum += r.mean_loss * static_cast<double>(batch.size());
      ++step;
    }
    const auto m = evaluate(model, val);
    RecEpoch e{epoch + 1, loss_sum / static_cast<double>(train.size()), m.auc, m.logloss};
    progress.result.epochs.push_back(e);
    if (e.val_auc > progress.result.best_val_auc) {
      progress.result.best_val_auc = e.val_auc;
      progress.result.best_epoch = e.epoch;
      progress.best_values = snapshot(model.parameters());
      progress.stale_epochs = 0;
    } else if (++progress.stale_epochs >= config.patience) {
      progress.stopped = true;
    }
    progress.epoch = e.epoch;
    progress.optimizer = optimizer.state();
    if (hooks.log) {
      auto rec = epoch_json(e);
      rec["stage"] = "rec";
      hooks.log->write(rec);
    }
    if (hooks.on_epoch) hooks.on_epoch(progress);
  }
  restore(model.parameters(), progress.best_values);
  return progress.result;
}

void to_json(nlohmann::json& j, const GeneratedJD& g) {
  j = nlohmann::json{{"seeker_id", g.seeker_id}, {"index", g.index}, {"tokens", g.tokens}, {"hit_eos", g.hit_eos}};
}

void from_json(const nlohmann::json& j, GeneratedJD& g) {
  g.seeker_id = j.at("seeker_id").get<std::uint64_t>();
  g.index = j.at("index").get<std::size_t>();
  g.tokens = j.at("tokens").get<Tokens>();
  g.hit_eos = j.at("hit_eos").get<bool>();
}

std::vector<GeneratedJD> generate_for_cvs(const models::GeneratorModel& generator, const corpus::World& world,
                                          std::span<const corpus::CVDoc> cvs, std::size_t n,
                                          const models::SamplingConfig& sampling, std::uint64_t seed,
                                          std::size_t max_prompt_len) {
  sampling.validate();
  std::vector<GeneratedJD> out;
  out.reserve(cvs.size() * n);
  for (const auto& cv : cvs) {
    const auto prompt = corpus::assemble_prompt(world, cv.tokens, {}, max_prompt_len);
    const std::uint64_t cv_seed = derive_seed(seed, cv.seeker_id);
    for (std::size_t i = 0; i < n; ++i) {
      Rng rng(derive_seed(cv_seed, i));
      auto g = models::generate(generator, prompt.tokens, sampling, rng);
      out.push_back({cv.seeker_id, i, std::move(g.tokens), g.hit_eos});
    }
  }
  return out;
}

void save_generations(const std::filesystem::path& path, std::span<const GeneratedJD> rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp);
    for (const auto& r : rows) {
      nlohmann::json j = r;
      j["schema"] = kGenerationSchema;
      f << j.dump() << '\n';
    }
    if (!f) throw std::runtime_error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

LoadedGenerations load_generations(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw MissingPrerequisite(path.string());
  LoadedGenerations out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(f, line)) {
    ++number;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (j.value("schema", "") != kGenerationSchema) {
        out.warnings.push_back("line " + std::to_string(number) + ": expected schema " + kGenerationSchema);
        continue;
      }
      out.rows.push_back(j.get<GeneratedJD>());
    } catch (const nlohmann::json::exception& e) {
      out.warnings.push_back("line " + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

GenerationCache::GenerationCache(std::span<const GeneratedJD> rows) {
  for (const auto& r : rows) by_seeker_[r.seeker_id][r.index] = r.tokens;
}

std::vector<Tokens> GenerationCache::first(std::uint64_t seeker_id, std::size_t n) const {
  const auto it = by_seeker_.find(seeker_id);
  std::vector<Tokens> out;
  if (it != by_seeker_.end()) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto g = it->second.find(i);
      if (g == it->second.end()) break;
      out.push_back(g->second);
    }
  }
  if (out.size() < n) {
    throw MissingPrerequisite("generation " + std::to_string(out.size()) + " of seeker " + std::to_string(seeker_id));
  }
  return out;
}

std::vector<RecInstance> make_instances(std::span<const corpus::RecExample> split, const GenerationCache* cache,
                                        std::size_t n) {
  if (n > 0 && !cache) throw ConfigError("make_instances: generations requested without a cache");
  std::vector<RecInstance> out;
  out.reserve(split.size());
  for (const auto& ex : split) {
    RecInstance x;
    x.cv = ex.cv.tokens;
    x.jd = ex.jd.tokens;
    x.label = ex.label;
    x.cold = ex.cold;
    if (n > 0) x.generated = cache->first(ex.cv.seeker_id, n);
    out.push_back(std::move(x));
  }
  return out;
}

}  // namespace jobgen::recsys
