#include "jobgen/models/scorer.hpp"

#include "jobgen/common/error.hpp"

namespace jobgen::models {

using tensor::Shape;

ScalarHeadModel::ScalarHeadModel(const TransformerConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  body_ = TransformerBody(store_, config, "trunk.", rng);
  Tensor w(Shape{config.width, 1});
  for (double& v : w.data()) v = rng.normal(0.0, config.init_std);
  head_w_ = store_.add("head.w", std::move(w));
  head_b_ = store_.add("head.b", Tensor(Shape{1}, 0.0));
}

Var ScalarHeadModel::score_sequence(Tape& tape, std::span<const TokenId> tokens, Rng* dropout_rng) const {
  Var h = body_.forward(tape, store_, tokens, /*causal=*/true, dropout_rng);
  Var last = gather_rows(h, {tokens.size() - 1});
  return linear(tape, store_, last, head_w_, head_b_);
}

tensor::Checkpoint ScalarHeadModel::checkpoint(const std::string& role) const {
  tensor::Checkpoint ckpt;
  ckpt.role = role;
  ckpt.meta["config"] = config();
  ckpt.add_store(store_);
  return ckpt;
}

void ScalarHeadModel::load(const tensor::Checkpoint& ckpt) { ckpt.load_store(store_); }

namespace {

void expect_role(const tensor::Checkpoint& ckpt, const std::string& role) {
  if (ckpt.role != role) {
    throw ConfigError("expected a " + role + " checkpoint, found role '" + ckpt.role + "'");
  }
}

// Drops trailing padding and any trailing end-of-sequence markers.
std::span<const TokenId> strip_terminators(std::span<const TokenId> tokens) {
  tokens = strip_padding(tokens);
  while (!tokens.empty() && (tokens.back() == kEosToken || tokens.back() == kPadToken)) {
    tokens = tokens.first(tokens.size() - 1);
  }
  return tokens;
}

}  // namespace

Tokens RewardModel::assemble(std::span<const TokenId> cv, std::span<const TokenId> jd) {
  const auto c = strip_terminators(cv);
  const auto j = strip_terminators(jd);
  Tokens seq(c.begin(), c.end());
  seq.push_back(kSepToken);
  seq.insert(seq.end(), j.begin(), j.end());
  seq.push_back(kEosToken);
  return seq;
}

Var RewardModel::score(Tape& tape, std::span<const TokenId> cv, std::span<const TokenId> jd,
                       Rng* dropout_rng) const {
  return score_sequence(tape, assemble(cv, jd), dropout_rng);
}

double RewardModel::score(std::span<const TokenId> cv, std::span<const TokenId> jd) const {
  Tape tape;
  return score(tape, cv, jd).value().item();
}

RewardModel RewardModel::from_checkpoint(const tensor::Checkpoint& ckpt) {
  expect_role(ckpt, "reward");
  RewardModel model(ckpt.meta.at("config").get<TransformerConfig>(), 0);
  model.load(ckpt);
  return model;
}

CriticModel CriticModel::from_reward(const RewardModel& reward) {
  return CriticModel(static_cast<const ScalarHeadModel&>(reward));
}

Tokens CriticModel::assemble(std::span<const TokenId> cv) {
  const auto c = strip_terminators(cv);
  Tokens seq(c.begin(), c.end());
  seq.push_back(kSepToken);
  return seq;
}

Var CriticModel::value(Tape& tape, std::span<const TokenId> cv) const { return score_sequence(tape, assemble(cv)); }

double CriticModel::value(std::span<const TokenId> cv) const {
  Tape tape;
  return value(tape, cv).value().item();
}

CriticModel CriticModel::from_checkpoint(const tensor::Checkpoint& ckpt) {
  expect_role(ckpt, "critic");
  CriticModel model(ckpt.meta.at("config").get<TransformerConfig>(), 0);
  model.load(ckpt);
  return model;
}

}  // namespace jobgen::models
