#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "jobgen/common/metrics.hpp"
#include "jobgen/corpus/datasets.hpp"
#include "jobgen/evaluation/metrics.hpp"
#include "jobgen/models/generator.hpp"
#include "jobgen/models/sampling.hpp"
#include "jobgen/models/transformer.hpp"
#include "jobgen/tensor/checkpoint.hpp"

namespace jobgen::recsys {

using tensor::Tape;
using tensor::Var;

enum class PredictorKind { mlp, dot };

std::string to_string(PredictorKind kind);
PredictorKind predictor_kind_from_string(const std::string& s);

struct RecModelConfig {
  models::TransformerConfig encoder{0, 40, 32, 1, 2, 64, 0.0, 0.05};
  PredictorKind predictor = PredictorKind::mlp;
  bool enhanced = false;
  std::size_t hidden = 64;
  // Separate encoder for JDs (job and generated); off means one shared encoder.
  bool twin_encoder = false;
  // Start the dot fusion MLP at c' = c (plus init noise), so an untrained
  // enhanced dot model scores like the base one. Needs hidden >= 2 * width.
  bool identity_fusion_init = true;

  void validate() const;
};

void to_json(nlohmann::json& j, const RecModelConfig& c);
void from_json(const nlohmann::json& j, RecModelConfig& c);

// One scored (CV, JD) pair with the generated JDs of its CV.
struct RecInstance {
  Tokens cv;
  Tokens jd;
  int label = 0;
  bool cold = false;
  std::vector<Tokens> generated;
};

// Coordinate-wise mean of k [1, w] embeddings. Rejects an empty list and
// mismatched widths.
Var fuse_generated(std::span<const Var> embeddings);
std::vector<double> fuse_generated(std::span<const std::vector<double>> embeddings);

// Text encoder plus predictor. Raw scores are logits; probabilities are
// their sigmoid.
//   mlp:  MLP([c; j])       enhanced: MLP([c; j; j'])
//   dot:  c . j             enhanced: MLP([c; j']) . j
class RecModel {
 public:
  RecModel() = default;
  RecModel(const RecModelConfig& config, std::uint64_t seed);

  Var embed_cv(Tape& tape, std::span<const TokenId> cv, Rng* dropout_rng = nullptr) const;
  Var embed_jd(Tape& tape, std::span<const TokenId> jd, Rng* dropout_rng = nullptr) const;

  Var base_logit(Tape& tape, Var c, Var j) const;
  // Throws ConfigError on a model built without the enhancement head.
  Var enhanced_logit(Tape& tape, Var c, Var j, Var j_generated) const;

  // Base or enhanced logit by the enhancement flag. Enhanced scoring rejects
  // an instance without generated JDs and uses their fused embedding.
  Var logit(Tape& tape, const RecInstance& x, Rng* dropout_rng = nullptr) const;
  double probability(const RecInstance& x) const;

  const RecModelConfig& config() const noexcept { return config_; }
  std::size_t width() const noexcept { return config_.encoder.width; }
  tensor::ParameterStore& parameters() noexcept { return store_; }
  const tensor::ParameterStore& parameters() const noexcept { return store_; }

  tensor::Checkpoint to_checkpoint() const;
  static RecModel from_checkpoint(const tensor::Checkpoint& ckpt);

  // Copies the encoders and, for the mlp predictor, the base head from a
  // trained base model of the same predictor and encoder. The head weights
  // reading the generated-JD embedding start at zero, so an enhanced mlp
  // model starts out scoring exactly like the base one.
  void warm_start(const RecModel& base);

 private:
  struct Mlp {
    std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0;
  };
  Var mlp(Tape& tape, const Mlp& m, Var x) const;
  Mlp add_mlp(const std::string& prefix, std::size_t in, std::size_t out, Rng& rng);

  RecModelConfig config_;
  tensor::ParameterStore store_;
  models::TransformerBody cv_encoder_, jd_encoder_;
  Mlp head_;
};

// -[z log s + (1 - z) log(1 - s)] with s = sigmoid(logit).
Var bce_loss(Var logit, int label);

std::vector<double> predict(const RecModel& model, std::span<const RecInstance> data);
evaluation::RecMetrics evaluate(const RecModel& model, std::span<const RecInstance> data);

struct RecTrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  double clip_norm = 1.0;
  // Epochs without a validation AUC gain before stopping.
  std::size_t patience = 4;
  std::uint64_t seed = 5;
  // Enhanced cells start from the trained base cell of the same predictor and
  // fine-tune at this rate. Off: they train from scratch at learning_rate.
  bool warm_start = true;
  double warm_start_learning_rate = 3e-4;

  void validate() const;
};

void to_json(nlohmann::json& j, const RecTrainConfig& c);
void from_json(const nlohmann::json& j, RecTrainConfig& c);

struct RecEpoch {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_auc = 0.0;
  double val_logloss = 0.0;
};

struct RecTrainResult {
  std::vector<RecEpoch> epochs;
  std::size_t best_epoch = 0;  // 0 is the untrained model
  double best_val_auc = 0.0;
};

// Everything needed to continue training after a completed epoch.
struct RecProgress {
  std::size_t epoch = 0;  // completed epochs
  tensor::OptimizerState optimizer;
  RecTrainResult result;
  std::vector<tensor::Tensor> best_values;  // parameter values of the best epoch
  std::size_t stale_epochs = 0;
  bool stopped = false;
};

void add_progress(tensor::Checkpoint& ckpt, const RecProgress& progress);
bool has_progress(const tensor::Checkpoint& ckpt);
RecProgress read_progress(const tensor::Checkpoint& ckpt);

struct RecHooks {
  MetricsLog* log = nullptr;
  // Called after every epoch with the model holding that epoch's parameters.
  std::function<void(const RecProgress&)> on_epoch;
  // Continue from a saved epoch; the model must hold that epoch's parameters.
  const RecProgress* resume = nullptr;
};

// Minibatch binary cross-entropy. After the last epoch, or once validation
// AUC has not improved for `patience` epochs, the parameters of the best
// validation epoch are restored.
RecTrainResult train_rec(RecModel& model, std::span<const RecInstance> train, std::span<const RecInstance> val,
                         const RecTrainConfig& config, const RecHooks& hooks = {});

// One generated JD for one seeker.
struct GeneratedJD {
  std::uint64_t seeker_id = 0;
  std::size_t index = 0;
  Tokens tokens;
  bool hit_eos = false;
};

void to_json(nlohmann::json& j, const GeneratedJD& g);
void from_json(const nlohmann::json& j, GeneratedJD& g);

// n samples per CV; sample i of seeker s draws from derive_seed(derive_seed(seed, s), i).
std::vector<GeneratedJD> generate_for_cvs(const models::GeneratorModel& generator, const corpus::World& world,
                                          std::span<const corpus::CVDoc> cvs, std::size_t n,
                                          const models::SamplingConfig& sampling, std::uint64_t seed,
                                          std::size_t max_prompt_len = 48);

inline constexpr const char* kGenerationSchema = "jobgen.generation.v1";

// Line-delimited records, one per generated JD, each tagged with the schema.
void save_generations(const std::filesystem::path& path, std::span<const GeneratedJD> rows);

struct LoadedGenerations {
  std::vector<GeneratedJD> rows;
  // "line N: reason" for every skipped malformed line.
  std::vector<std::string> warnings;
};

LoadedGenerations load_generations(const std::filesystem::path& path);

// Generated JDs by seeker, in index order.
class GenerationCache {
 public:
  GenerationCache() = default;
  explicit GenerationCache(std::span<const GeneratedJD> rows);

  // The first n generations of a seeker. Throws MissingPrerequisite when the
  // seeker has fewer.
  std::vector<Tokens> first(std::uint64_t seeker_id, std::size_t n) const;
  std::size_t seekers() const noexcept { return by_seeker_.size(); }

 private:
  std::map<std::uint64_t, std::map<std::size_t, Tokens>> by_seeker_;
};

// Copies the split into scoring instances, attaching n generations per CV
// from cache. cache may be null when n is 0.
std::vector<RecInstance> make_instances(std::span<const corpus::RecExample> split, const GenerationCache* cache,
                                        std::size_t n);

}  // namespace jobgen::recsys
