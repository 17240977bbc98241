#include "jobgen/alignment/reward.hpp"

#include "jobgen/common/error.hpp"

namespace jobgen::alignment {

void RmtConfig::validate() const {
  if (epochs == 0 || batch_size == 0) throw ConfigError("rmt: epochs and batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("rmt: learning_rate must be positive");
  if (!(clip_norm > 0.0)) throw ConfigError("rmt: clip_norm must be positive");
  if (!(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0)) {
    throw ConfigError("rmt: final_lr_fraction must lie in (0, 1]");
  }
}

void to_json(nlohmann::json& j, const RmtConfig& c) {
  j = nlohmann::json{{"epochs", c.epochs},       {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
                     {"clip_norm", c.clip_norm}, {"seed", c.seed},             {"final_lr_fraction", c.final_lr_fraction},
                     {"resample_negatives", c.resample_negatives}};
}

void from_json(const nlohmann::json& j, RmtConfig& c) {
  RmtConfig d;
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.clip_norm = j.value("clip_norm", d.clip_norm);
  c.seed = j.value("seed", d.seed);
  c.final_lr_fraction = j.value("final_lr_fraction", d.final_lr_fraction);
  c.resample_negatives = j.value("resample_negatives", d.resample_negatives);
}

Var rmt_loss(Tape& tape, const models::RewardModel& model, std::span<const TokenId> cv,
             std::span<const TokenId> positive, std::span<const TokenId> negative, Rng* dropout_rng) {
  Var margin = subtract(model.score(tape, cv, positive, dropout_rng), model.score(tape, cv, negative, dropout_rng));
  return scale(sum(log_sigmoid(margin)), -1.0);
}

double pairwise_accuracy(const models::RewardModel& model, std::span<const corpus::RmtExample> pairs) {
  if (pairs.empty()) throw ConfigError("pairwise_accuracy: no pairs");
  std::size_t correct = 0;
  for (const auto& p : pairs) {
    correct += model.score(p.cv.tokens, p.positive.tokens) > model.score(p.cv.tokens, p.negative.tokens) ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

NegativeSampler world_negative_sampler(const corpus::World& world, std::uint64_t seed) {
  return [&world, seed](const corpus::RmtExample& ex, std::size_t epoch, std::size_t index) {
    Rng rng(derive_seed(derive_seed(seed, epoch), index));
    return world.sample_jd_for_cv(ex.cv, 0, rng, ex.negative.job_id);
  };
}

RmtResult train_reward(models::RewardModel& model, std::span<const corpus::RmtExample> train,
                       std::span<const corpus::RmtExample> heldout, const RmtConfig& config,
                       const TrainHooks& hooks, const NegativeSampler& sampler) {
  config.validate();
  if (train.empty()) throw ConfigError("train_reward: empty training set");
  if (config.resample_negatives && !sampler) throw ConfigError("train_reward: resampling needs a negative sampler");
  tensor::OptimizerConfig oc;
  oc.learning_rate = config.learning_rate;
  oc.clip_norm = config.clip_norm;
  tensor::Optimizer optimizer(oc);
  if (hooks.resume_state) optimizer.state() = *hooks.resume_state;

  RmtResult result;
  if (!heldout.empty()) result.initial_accuracy = pairwise_accuracy(model, heldout);
  if (hooks.log && hooks.start_epoch == 0 && !heldout.empty()) {
    hooks.log->write({{"stage", "rmt"}, {"epoch", 0}, {"heldout_accuracy", result.initial_accuracy}});
  }
  const std::uint64_t dropout_seed = derive_seed(config.seed, "dropout");
  std::vector<Tokens> negatives(train.size());
  for (std::size_t epoch = hooks.start_epoch; epoch < config.epochs; ++epoch) {
    for (std::size_t i = 0; i < train.size(); ++i) {
      negatives[i] = config.resample_negatives ? sampler(train[i], epoch, i).tokens : train[i].negative.tokens;
    }
    const double progress = config.epochs > 1 ? static_cast<double>(epoch) / static_cast<double>(config.epochs - 1) : 0.0;
    optimizer.state().learning_rate = config.learning_rate * (1.0 - (1.0 - config.final_lr_fraction) * progress);
    const auto order = epoch_order(train.size(), config.seed, epoch);
    double loss_sum = 0.0;
    std::size_t step = 0;
    for (auto batch : batches(order, config.batch_size)) {
      Rng dropout(derive_seed(derive_seed(dropout_seed, epoch), step));
      const auto r = minibatch_step(model.parameters(), optimizer, batch, [&](std::size_t i, Tape& tape) {
        return rmt_loss(tape, model, train[i].cv.tokens, train[i].positive.tokens, negatives[i], &dropout);
      });
      loss_sum += r.mean_loss * static_cast<double>(batch.size());
      ++step;
    }
    RmtEpoch rec;
    rec.epoch = epoch + 1;
    rec.train_loss = loss_sum / static_cast<double>(train.size());
    if (!heldout.empty()) rec.heldout_accuracy = pairwise_accuracy(model, heldout);
    result.epochs.push_back(rec);
    if (hooks.log) {
      hooks.log->write({{"stage", "rmt"},
                        {"epoch", rec.epoch},
                        {"train_loss", rec.train_loss},
                        {"heldout_accuracy", rec.heldout_accuracy}});
    }
    if (hooks.on_epoch) hooks.on_epoch(rec.epoch, optimizer);
  }
  return result;
}

}  // namespace jobgen::alignment
