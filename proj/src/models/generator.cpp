#include "jobgen/models/generator.hpp"

#include "jobgen/common/error.hpp"

namespace jobgen::models {

using tensor::Shape;

GeneratorModel::GeneratorModel(const TransformerConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  body_ = TransformerBody(store_, config, "trunk.", rng);
  Tensor w(Shape{config.width, config.vocab_size});
  for (double& v : w.data()) v = rng.normal(0.0, config.init_std);
  head_w_ = store_.add("head.w", std::move(w));
  head_b_ = store_.add("head.b", Tensor(Shape{config.vocab_size}, 0.0));
}

Var GeneratorModel::logits(Tape& tape, std::span<const TokenId> tokens, Rng* dropout_rng) const {
  Var h = body_.forward(tape, store_, tokens, /*causal=*/true, dropout_rng);
  return linear(tape, store_, h, head_w_, head_b_);
}

Tensor GeneratorModel::forward_logits(std::span<const TokenId> tokens) const {
  Tape tape;
  return logits(tape, tokens).value();
}

tensor::Checkpoint GeneratorModel::to_checkpoint(const std::string& role) const {
  tensor::Checkpoint ckpt;
  ckpt.role = role;
  ckpt.meta["config"] = config();
  ckpt.add_store(store_);
  return ckpt;
}

GeneratorModel GeneratorModel::from_checkpoint(const tensor::Checkpoint& ckpt) {
  if (ckpt.role != "generator" && ckpt.role != "actor") {
    throw ConfigError("expected a generator checkpoint, found role '" + ckpt.role + "'");
  }
  GeneratorModel model(ckpt.meta.at("config").get<TransformerConfig>(), 0);
  ckpt.load_store(model.store_);
  return model;
}

Tokens teacher_forcing_input(std::span<const TokenId> prompt, std::span<const TokenId> target) {
  if (prompt.empty()) throw ShapeError("prompt must be nonempty");
  if (target.empty()) throw ShapeError("target must be nonempty");
  Tokens input(prompt.begin(), prompt.end());
  input.insert(input.end(), target.begin(), target.end() - 1);
  return input;
}

Var response_logprobs(Var logits, std::size_t prompt_len, std::span<const TokenId> target) {
  const std::size_t rows = logits.value().rows();
  if (prompt_len == 0 || prompt_len + target.size() - 1 != rows) {
    throw ShapeError("response_logprobs: logits have " + std::to_string(rows) + " rows for prompt " +
                     std::to_string(prompt_len) + " and target " + std::to_string(target.size()));
  }
  std::vector<std::size_t> picked_rows(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) picked_rows[i] = prompt_len - 1 + i;
  std::vector<std::size_t> ids(target.begin(), target.end());
  return pick(log_softmax(gather_rows(logits, std::move(picked_rows))), std::move(ids));
}

Var target_logprobs(Tape& tape, const GeneratorModel& model, std::span<const TokenId> prompt,
                    std::span<const TokenId> target, Rng* dropout_rng) {
  const Tokens input = teacher_forcing_input(prompt, target);
  return response_logprobs(model.logits(tape, input, dropout_rng), prompt.size(), target);
}

std::vector<double> sequence_logprobs(const GeneratorModel& model, std::span<const TokenId> prompt,
                                      std::span<const TokenId> target) {
  Tape tape;
  Var lp = target_logprobs(tape, model, prompt, target);
  const auto d = lp.value().data();
  return {d.begin(), d.end()};
}

Var sft_loss(Tape& tape, const GeneratorModel& model, std::span<const TokenId> prompt,
             std::span<const TokenId> target, Rng* dropout_rng) {
  return scale(mean(target_logprobs(tape, model, prompt, target, dropout_rng)), -1.0);
}

}  // namespace jobgen::models
