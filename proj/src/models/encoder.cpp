#include "jobgen/models/encoder.hpp"

#include "jobgen/common/error.hpp"

namespace jobgen::models {

TextEncoder::TextEncoder(const TransformerConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  body_ = TransformerBody(store_, config, "trunk.", rng);
}

Var TextEncoder::encode(Tape& tape, std::span<const TokenId> tokens, Rng* dropout_rng) const {
  const auto content = strip_padding(tokens);
  if (content.empty()) throw ShapeError("encoder: input has no non-padding tokens");
  return mean_rows(body_.forward(tape, store_, content, /*causal=*/false, dropout_rng));
}

std::vector<double> TextEncoder::encode(std::span<const TokenId> tokens) const {
  Tape tape;
  const auto d = encode(tape, tokens).value().data();
  return {d.begin(), d.end()};
}

tensor::Checkpoint TextEncoder::to_checkpoint() const {
  tensor::Checkpoint ckpt;
  ckpt.role = "encoder";
  ckpt.meta["config"] = config();
  ckpt.meta["final_norm"] = body_.final_norm();
  ckpt.add_store(store_);
  return ckpt;
}

TextEncoder TextEncoder::from_checkpoint(const tensor::Checkpoint& ckpt) {
  if (ckpt.role != "encoder") throw ConfigError("expected an encoder checkpoint, found role '" + ckpt.role + "'");
  TextEncoder enc(ckpt.meta.at("config").get<TransformerConfig>(), 0);
  enc.body_.set_final_norm(ckpt.meta.value("final_norm", true));
  ckpt.load_store(enc.store_);
  return enc;
}

}  // namespace jobgen::models
