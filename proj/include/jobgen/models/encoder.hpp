#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "jobgen/models/transformer.hpp"
#include "jobgen/tensor/checkpoint.hpp"

namespace jobgen::models {

// Bidirectional trunk mean-pooled to a fixed-width [1, width] vector.
// Trailing padding is dropped before encoding.
class TextEncoder {
 public:
  TextEncoder() = default;
  TextEncoder(const TransformerConfig& config, std::uint64_t seed);

  Var encode(Tape& tape, std::span<const TokenId> tokens, Rng* dropout_rng = nullptr) const;
  std::vector<double> encode(std::span<const TokenId> tokens) const;

  std::size_t width() const noexcept { return body_.config().width; }
  const TransformerConfig& config() const noexcept { return body_.config(); }
  TransformerBody& body() noexcept { return body_; }
  const TransformerBody& body() const noexcept { return body_; }
  ParameterStore& parameters() noexcept { return store_; }
  const ParameterStore& parameters() const noexcept { return store_; }

  tensor::Checkpoint to_checkpoint() const;
  static TextEncoder from_checkpoint(const tensor::Checkpoint& ckpt);

 private:
  ParameterStore store_;
  TransformerBody body_;
};

}  // namespace jobgen::models
