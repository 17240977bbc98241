#include "jobgen/models/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "jobgen/common/error.hpp"
#include "jobgen/tensor/kernels.hpp"

namespace jobgen::models {

namespace k = tensor::kernels;

void SamplingConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ConfigError("sampling: temperature must be finite and positive");
  }
  if (top_k < 1) throw ConfigError("sampling: top_k must be at least 1");
  if (max_new_tokens < 1) throw ConfigError("sampling: max_new_tokens must be at least 1");
}

void to_json(nlohmann::json& j, const SamplingConfig& c) {
  j = nlohmann::json{{"temperature", c.temperature}, {"top_k", c.top_k}, {"max_new_tokens", c.max_new_tokens},
                     {"eos_id", c.eos_id},           {"seed", c.seed},   {"greedy", c.greedy}};
}

void from_json(const nlohmann::json& j, SamplingConfig& c) {
  SamplingConfig d;
  c.temperature = j.value("temperature", d.temperature);
  c.top_k = j.value("top_k", d.top_k);
  c.max_new_tokens = j.value("max_new_tokens", d.max_new_tokens);
  c.eos_id = j.value("eos_id", d.eos_id);
  c.seed = j.value("seed", d.seed);
  c.greedy = j.value("greedy", d.greedy);
}

IncrementalDecoder::IncrementalDecoder(const GeneratorModel& model)
    : model_(model), keys_(model.body().layers().size()), values_(model.body().layers().size()) {}

namespace {

// out = x[1,in] @ W[in,out] + b
void affine(std::span<const double> x, const Tensor& w, const Tensor& b, std::vector<double>& out) {
  out.assign(b.data().begin(), b.data().end());
  k::matmul_acc(x, w.data(), out, 1, x.size(), out.size());
}

void norm_affine(std::span<const double> x, const Tensor& g, const Tensor& b, std::vector<double>& out) {
  out.assign(x.begin(), x.end());
  k::layer_norm_row(out, 1e-5);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] * g[i] + b[i];
}

}  // namespace

std::span<const double> IncrementalDecoder::step(TokenId token) {
  const TransformerBody& body = model_.body();
  const TransformerConfig& cfg = body.config();
  const ParameterStore& s = model_.parameters();
  if (pos_ >= cfg.max_seq_len) {
    throw ShapeError("decoder: position " + std::to_string(pos_) + " reaches max_seq_len " +
                     std::to_string(cfg.max_seq_len));
  }
  if (token >= cfg.vocab_size) {
    throw ShapeError("decoder: token id " + std::to_string(token) + " outside vocabulary of " +
                     std::to_string(cfg.vocab_size));
  }
  const std::size_t w = cfg.width;
  const std::size_t hd = cfg.head_dim();
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(hd));

  std::vector<double> x(w);
  const Tensor& tok = s[body.token_embedding()].value;
  const Tensor& posemb = s[body.position_embedding()].value;
  for (std::size_t i = 0; i < w; ++i) x[i] = tok.at(token, i) + posemb.at(pos_, i);

  std::vector<double> h, q, kv, att(w), proj, ff;
  std::vector<double> scores;
  for (std::size_t l = 0; l < body.layers().size(); ++l) {
    const auto& L = body.layers()[l];
    norm_affine(x, s[L.ln1_g].value, s[L.ln1_b].value, h);
    affine(h, s[L.wq].value, s[L.bq].value, q);
    affine(h, s[L.wk].value, s[L.bk].value, kv);
    keys_[l].insert(keys_[l].end(), kv.begin(), kv.end());
    affine(h, s[L.wv].value, s[L.bv].value, kv);
    values_[l].insert(values_[l].end(), kv.begin(), kv.end());

    const std::size_t n = pos_ + 1;
    std::fill(att.begin(), att.end(), 0.0);
    scores.resize(n);
    for (std::size_t hi = 0; hi < cfg.heads; ++hi) {
      const std::size_t off = hi * hd;
      for (std::size_t j = 0; j < n; ++j) {
        double dot = 0.0;
        for (std::size_t d = 0; d < hd; ++d) dot += q[off + d] * keys_[l][j * w + off + d];
        scores[j] = dot * att_scale;
      }
      k::softmax_row(scores);
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t d = 0; d < hd; ++d) att[off + d] += scores[j] * values_[l][j * w + off + d];
      }
    }
    affine(att, s[L.wo].value, s[L.bo].value, proj);
    for (std::size_t i = 0; i < w; ++i) x[i] += proj[i];

    norm_affine(x, s[L.ln2_g].value, s[L.ln2_b].value, h);
    affine(h, s[L.w1].value, s[L.b1].value, ff);
    for (double& v : ff) v = k::gelu(v);
    affine(ff, s[L.w2].value, s[L.b2].value, proj);
    for (std::size_t i = 0; i < w; ++i) x[i] += proj[i];
  }
  if (body.final_norm()) {
    norm_affine(x, s[body.final_gain()].value, s[body.final_bias()].value, h);
    x.swap(h);
  }
  affine(x, s[model_.head_weight()].value, s[model_.head_bias()].value, logits_);
  ++pos_;
  return logits_;
}

TokenId sample_token(std::span<const double> logits, const SamplingConfig& cfg, Rng& rng) {
  if (logits.empty()) throw ShapeError("sample_token: empty logits");
  if (cfg.greedy || cfg.top_k == 1) {
    return static_cast<TokenId>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  }
  std::vector<std::size_t> order(logits.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t kk = std::min(cfg.top_k, logits.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kk), order.end(),
                    [&](std::size_t a, std::size_t b) { return logits[a] > logits[b] || (logits[a] == logits[b] && a < b); });
  std::vector<double> weights(kk);
  for (std::size_t i = 0; i < kk; ++i) weights[i] = logits[order[i]] / cfg.temperature;
  k::softmax_row(weights);
  return static_cast<TokenId>(order[rng.weighted(weights)]);
}

Generation generate(const GeneratorModel& model, std::span<const TokenId> prompt, const SamplingConfig& cfg,
                    Rng& rng) {
  cfg.validate();
  if (prompt.empty()) throw ShapeError("generate: prompt must be nonempty");
  const std::size_t limit = model.config().max_seq_len;
  if (prompt.size() + cfg.max_new_tokens > limit) {
    throw ShapeError("generate: prompt length " + std::to_string(prompt.size()) + " plus max_new_tokens " +
                     std::to_string(cfg.max_new_tokens) + " exceeds max_seq_len " + std::to_string(limit));
  }
  IncrementalDecoder decoder(model);
  std::span<const double> logits;
  for (TokenId t : prompt) logits = decoder.step(t);

  Generation out;
  for (std::size_t i = 0; i < cfg.max_new_tokens; ++i) {
    const TokenId next = sample_token(logits, cfg, rng);
    out.tokens.push_back(next);
    out.logprobs.push_back(logits[next] - k::log_sum_exp(logits));
    if (next == cfg.eos_id) {
      out.hit_eos = true;
      break;
    }
    if (i + 1 < cfg.max_new_tokens) logits = decoder.step(next);
  }
  return out;
}

Generation generate(const GeneratorModel& model, std::span<const TokenId> prompt, const SamplingConfig& cfg) {
  Rng rng(cfg.seed);
  return generate(model, prompt, cfg, rng);
}

}  // namespace jobgen::models
