#include "jobgen/models/transformer.hpp"

#include <cmath>

#include "jobgen/common/error.hpp"

namespace jobgen::models {

using tensor::Shape;

void TransformerConfig::validate() const {
  if (vocab_size < 3) throw ConfigError("transformer: vocab_size must cover the reserved tokens");
  if (max_seq_len == 0) throw ConfigError("transformer: max_seq_len must be positive");
  if (width == 0 || heads == 0) throw ConfigError("transformer: width and heads must be positive");
  if (width % heads != 0) {
    throw ConfigError("transformer: width " + std::to_string(width) + " not divisible by heads " +
                      std::to_string(heads));
  }
  if (layers > 0 && ff_width == 0) throw ConfigError("transformer: ff_width must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("transformer: dropout must lie in [0, 1)");
  if (!(init_std > 0.0)) throw ConfigError("transformer: init_std must be positive");
}

void to_json(nlohmann::json& j, const TransformerConfig& c) {
  j = nlohmann::json{{"vocab_size", c.vocab_size}, {"max_seq_len", c.max_seq_len}, {"width", c.width},
                     {"layers", c.layers},         {"heads", c.heads},             {"ff_width", c.ff_width},
                     {"dropout", c.dropout},       {"init_std", c.init_std}};
}

void from_json(const nlohmann::json& j, TransformerConfig& c) {
  TransformerConfig d;
  c.vocab_size = j.value("vocab_size", d.vocab_size);
  c.max_seq_len = j.value("max_seq_len", d.max_seq_len);
  c.width = j.value("width", d.width);
  c.layers = j.value("layers", d.layers);
  c.heads = j.value("heads", d.heads);
  c.ff_width = j.value("ff_width", d.ff_width);
  c.dropout = j.value("dropout", d.dropout);
  c.init_std = j.value("init_std", d.init_std);
}

namespace {

Tensor normal_tensor(Rng& rng, Shape shape, double stddev) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.normal(0.0, stddev);
  return t;
}

}  // namespace

TransformerBody::TransformerBody(ParameterStore& store, const TransformerConfig& config, const std::string& prefix,
                                 Rng& rng)
    : config_(config) {
  config_.validate();
  const std::size_t w = config_.width;
  const double sd = config_.init_std;
  // Residual projections are scaled down with depth.
  const double sd_out = sd / std::sqrt(2.0 * static_cast<double>(std::max<std::size_t>(1, config_.layers)));
  tok_emb_ = store.add(prefix + "tok_emb", normal_tensor(rng, Shape{config_.vocab_size, w}, sd));
  pos_emb_ = store.add(prefix + "pos_emb", normal_tensor(rng, Shape{config_.max_seq_len, w}, sd));
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string p = prefix + "layer" + std::to_string(l) + ".";
    Layer layer{};
    layer.ln1_g = store.add(p + "ln1.g", Tensor(Shape{w}, 1.0));
    layer.ln1_b = store.add(p + "ln1.b", Tensor(Shape{w}, 0.0));
    layer.wq = store.add(p + "attn.wq", normal_tensor(rng, Shape{w, w}, sd));
    layer.bq = store.add(p + "attn.bq", Tensor(Shape{w}, 0.0));
    layer.wk = store.add(p + "attn.wk", normal_tensor(rng, Shape{w, w}, sd));
    layer.bk = store.add(p + "attn.bk", Tensor(Shape{w}, 0.0));
    layer.wv = store.add(p + "attn.wv", normal_tensor(rng, Shape{w, w}, sd));
    layer.bv = store.add(p + "attn.bv", Tensor(Shape{w}, 0.0));
    layer.wo = store.add(p + "attn.wo", normal_tensor(rng, Shape{w, w}, sd_out));
    layer.bo = store.add(p + "attn.bo", Tensor(Shape{w}, 0.0));
    layer.ln2_g = store.add(p + "ln2.g", Tensor(Shape{w}, 1.0));
    layer.ln2_b = store.add(p + "ln2.b", Tensor(Shape{w}, 0.0));
    layer.w1 = store.add(p + "ff.w1", normal_tensor(rng, Shape{w, config_.ff_width}, sd));
    layer.b1 = store.add(p + "ff.b1", Tensor(Shape{config_.ff_width}, 0.0));
    layer.w2 = store.add(p + "ff.w2", normal_tensor(rng, Shape{config_.ff_width, w}, sd_out));
    layer.b2 = store.add(p + "ff.b2", Tensor(Shape{w}, 0.0));
    layers_.push_back(layer);
  }
  lnf_g_ = store.add(prefix + "lnf.g", Tensor(Shape{w}, 1.0));
  lnf_b_ = store.add(prefix + "lnf.b", Tensor(Shape{w}, 0.0));
}

void TransformerBody::check_tokens(std::span<const TokenId> tokens) const {
  if (tokens.empty()) throw ShapeError("transformer: empty input sequence");
  if (tokens.size() > config_.max_seq_len) {
    throw ShapeError("transformer: input length " + std::to_string(tokens.size()) + " exceeds max_seq_len " +
                     std::to_string(config_.max_seq_len));
  }
  for (TokenId t : tokens) {
    if (t >= config_.vocab_size) {
      throw ShapeError("transformer: token id " + std::to_string(t) + " outside vocabulary of " +
                       std::to_string(config_.vocab_size));
    }
  }
}

Var linear(Tape& tape, const ParameterStore& store, Var x, std::size_t w, std::size_t b) {
  return add(matmul(x, parameter(tape, store[w])), parameter(tape, store[b]));
}

namespace {

Var dropout(Tape& tape, Var x, double rate, Rng* rng) {
  if (rate <= 0.0 || rng == nullptr) return x;
  Tensor mask(x.value().shape());
  const double keep = 1.0 / (1.0 - rate);
  for (double& m : mask.data()) m = rng->uniform() < rate ? 0.0 : keep;
  return multiply(x, constant(tape, std::move(mask)));
}

Var affine_norm(Tape& tape, const ParameterStore& store, Var x, std::size_t g, std::size_t b) {
  return add(multiply(layer_norm(x), parameter(tape, store[g])), parameter(tape, store[b]));
}

}  // namespace

Var TransformerBody::forward(Tape& tape, const ParameterStore& store, std::span<const TokenId> tokens, bool causal,
                             Rng* dropout_rng) const {
  check_tokens(tokens);
  const std::size_t t_len = tokens.size();
  const std::size_t hd = config_.head_dim();
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(hd));

  std::vector<std::size_t> ids(tokens.begin(), tokens.end());
  std::vector<std::size_t> positions(t_len);
  for (std::size_t i = 0; i < t_len; ++i) positions[i] = i;
  Var x = add(gather_rows(parameter(tape, store[tok_emb_]), std::move(ids)),
              gather_rows(parameter(tape, store[pos_emb_]), std::move(positions)));

  for (const Layer& L : layers_) {
    Var h = affine_norm(tape, store, x, L.ln1_g, L.ln1_b);
    Var q = linear(tape, store, h, L.wq, L.bq);
    Var k = linear(tape, store, h, L.wk, L.bk);
    Var v = linear(tape, store, h, L.wv, L.bv);
    std::vector<Var> heads;
    heads.reserve(config_.heads);
    for (std::size_t hi = 0; hi < config_.heads; ++hi) {
      Var qh = slice_last(q, hi * hd, hd);
      Var kh = slice_last(k, hi * hd, hd);
      Var vh = slice_last(v, hi * hd, hd);
      Var scores = scale(matmul(qh, transpose(kh)), att_scale);
      if (causal) scores = causal_mask_fill(scores);
      heads.push_back(matmul(softmax(scores), vh));
    }
    Var att = linear(tape, store, concat_last(heads), L.wo, L.bo);
    x = add(x, dropout(tape, att, config_.dropout, dropout_rng));
    Var h2 = affine_norm(tape, store, x, L.ln2_g, L.ln2_b);
    Var ff = linear(tape, store, gelu(linear(tape, store, h2, L.w1, L.b1)), L.w2, L.b2);
    x = add(x, dropout(tape, ff, config_.dropout, dropout_rng));
  }
  if (final_norm_) x = affine_norm(tape, store, x, lnf_g_, lnf_b_);
  return x;
}

}  // namespace jobgen::models
