#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "jobgen/common/rng.hpp"
#include "jobgen/common/tokens.hpp"
#include "jobgen/tensor/tape.hpp"
#include "jobgen/tensor/tensor.hpp"

namespace jobgen::models {

using tensor::ParameterStore;
using tensor::Tape;
using tensor::Tensor;
using tensor::Var;

struct TransformerConfig {
  std::size_t vocab_size = 0;
  std::size_t max_seq_len = 64;
  std::size_t width = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t ff_width = 256;
  double dropout = 0.0;
  double init_std = 0.05;

  std::size_t head_dim() const { return width / heads; }
  void validate() const;
};

void to_json(nlohmann::json& j, const TransformerConfig& c);
void from_json(const nlohmann::json& j, TransformerConfig& c);

// Pre-norm transformer trunk: token + learned position embeddings, a stack of
// attention/feed-forward blocks with residuals, and a final layer norm. The
// weights live in the enclosing model's ParameterStore; this class only
// remembers their indices.
class TransformerBody {
 public:
  struct Layer {
    std::size_t ln1_g, ln1_b;
    std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
    std::size_t ln2_g, ln2_b;
    std::size_t w1, b1, w2, b2;
  };

  TransformerBody() = default;
  TransformerBody(ParameterStore& store, const TransformerConfig& config, const std::string& prefix, Rng& rng);

  // Hidden states [T, width]. Rejects empty, overlong or out-of-vocabulary
  // input. dropout_rng enables dropout when the configured rate is positive.
  Var forward(Tape& tape, const ParameterStore& store, std::span<const TokenId> tokens, bool causal,
              Rng* dropout_rng = nullptr) const;

  void check_tokens(std::span<const TokenId> tokens) const;

  const TransformerConfig& config() const noexcept { return config_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::size_t token_embedding() const noexcept { return tok_emb_; }
  std::size_t position_embedding() const noexcept { return pos_emb_; }
  std::size_t final_gain() const noexcept { return lnf_g_; }
  std::size_t final_bias() const noexcept { return lnf_b_; }
  bool final_norm() const noexcept { return final_norm_; }
  void set_final_norm(bool on) noexcept { final_norm_ = on; }

 private:
  TransformerConfig config_;
  std::size_t tok_emb_ = 0, pos_emb_ = 0, lnf_g_ = 0, lnf_b_ = 0;
  std::vector<Layer> layers_;
  bool final_norm_ = true;
};

// x @ W + b for a row-major activation matrix.
Var linear(Tape& tape, const ParameterStore& store, Var x, std::size_t w, std::size_t b);

}  // namespace jobgen::models
