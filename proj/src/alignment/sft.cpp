#include "jobgen/alignment/sft.hpp"

#include <cmath>

#include "jobgen/common/error.hpp"

namespace jobgen::alignment {

void SftConfig::validate() const {
  if (epochs == 0 || batch_size == 0) throw ConfigError("sft: epochs and batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("sft: learning_rate must be positive");
  if (!(clip_norm > 0.0)) throw ConfigError("sft: clip_norm must be positive");
}

void to_json(nlohmann::json& j, const SftConfig& c) {
  j = nlohmann::json{{"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"learning_rate", c.learning_rate},
                     {"clip_norm", c.clip_norm},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SftConfig& c) {
  SftConfig d;
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.clip_norm = j.value("clip_norm", d.clip_norm);
  c.seed = j.value("seed", d.seed);
}

Var sft_loss(Tape& tape, const models::GeneratorModel& model, const corpus::PromptInstance& instance,
             Rng* dropout_rng) {
  const std::size_t n = instance.tokens.size();
  if (instance.mask.size() != n) throw ShapeError("sft_loss: mask length differs from the token sequence");
  std::size_t first = n;
  while (first > 0 && instance.mask[first - 1]) --first;
  for (std::size_t i = 0; i < first; ++i) {
    if (instance.mask[i]) throw ShapeError("sft_loss: mask must cover exactly the output suffix");
  }
  if (first == n) throw ShapeError("sft_loss: output region is empty");
  const std::span<const TokenId> all(instance.tokens);
  return models::sft_loss(tape, model, all.first(first), all.subspan(first), dropout_rng);
}

HeldoutScore heldout_score(const models::GeneratorModel& model, std::span<const corpus::PromptInstance> data) {
  HeldoutScore s;
  double nll = 0.0;
  for (const auto& inst : data) {
    for (double lp : models::sequence_logprobs(model, inst.prompt(), inst.output)) nll -= lp;
    s.tokens += inst.output.size();
  }
  if (s.tokens == 0) throw ConfigError("heldout_score: no output tokens");
  s.loss = nll / static_cast<double>(s.tokens);
  s.perplexity = std::exp(s.loss);
  return s;
}

SftResult train_sft(models::GeneratorModel& model, std::span<const corpus::PromptInstance> train,
                    std::span<const corpus::PromptInstance> heldout, const SftConfig& config,
                    const TrainHooks& hooks) {
  config.validate();
  if (train.empty()) throw ConfigError("train_sft: empty training set");
  tensor::OptimizerConfig oc;
  oc.learning_rate = config.learning_rate;
  oc.clip_norm = config.clip_norm;
  tensor::Optimizer optimizer(oc);
  if (hooks.resume_state) optimizer.state() = *hooks.resume_state;

  SftResult result;
  if (!heldout.empty()) result.initial = heldout_score(model, heldout);
  if (hooks.log && hooks.start_epoch == 0 && !heldout.empty()) {
    hooks.log->write({{"stage", "sft"},
                      {"epoch", 0},
                      {"heldout_loss", result.initial.loss},
                      {"heldout_perplexity", result.initial.perplexity}});
  }
  const std::uint64_t dropout_seed = derive_seed(config.seed, "dropout");
  for (std::size_t epoch = hooks.start_epoch; epoch < config.epochs; ++epoch) {
    const auto order = epoch_order(train.size(), config.seed, epoch);
    double loss_sum = 0.0;
    std::size_t step = 0;
    for (auto batch : batches(order, config.batch_size)) {
      Rng dropout(derive_seed(derive_seed(dropout_seed, epoch), step));
      const auto r = minibatch_step(model.parameters(), optimizer, batch, [&](std::size_t i, Tape& tape) {
        return sft_loss(tape, model, train[i], &dropout);
      });
      loss_sum += r.mean_loss * static_cast<double>(batch.size());
      ++step;
    }
    SftEpoch rec;
    rec.epoch = epoch + 1;
    rec.train_loss = loss_sum / static_cast<double>(train.size());
    if (!heldout.empty()) rec.heldout = heldout_score(model, heldout);
    result.epochs.push_back(rec);
    if (hooks.log) {
      hooks.log->write({{"stage", "sft"},
                        {"epoch", rec.epoch},
                        {"train_loss", rec.train_loss},
                        {"heldout_loss", rec.heldout.loss},
                        {"heldout_perplexity", rec.heldout.perplexity}});
    }
    if (hooks.on_epoch) hooks.on_epoch(rec.epoch, optimizer);
  }
  return result;
}

}  // namespace jobgen::alignment
