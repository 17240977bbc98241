#include "jobgen/ppo/ppo.hpp"

#include <cmath>
#include <numeric>

#include "jobgen/common/error.hpp"

namespace jobgen::ppo {

using tensor::Tensor;

std::string to_string(OldPolicy p) { return p == OldPolicy::reference ? "reference" : "snapshot"; }

OldPolicy old_policy_from_string(const std::string& s) {
  if (s == "reference") return OldPolicy::reference;
  if (s == "snapshot") return OldPolicy::snapshot;
  throw ConfigError("ppo: unknown old_policy '" + s + "' (expected reference or snapshot)");
}

void PPOConfig::validate() const {
  if (!(kl_coef >= 0.0)) throw ConfigError("ppo: kl_coef must be non-negative");
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw ConfigError("ppo: clip_eps must lie in (0, 1)");
  if (inner_epochs < 1 || minibatch < 1 || rollout_batch < 1) {
    throw ConfigError("ppo: inner_epochs, minibatch and rollout_batch must be at least 1");
  }
  if (!(actor_lr > 0.0) || !(critic_lr > 0.0)) throw ConfigError("ppo: learning rates must be positive");
  if (!(clip_norm > 0.0)) throw ConfigError("ppo: clip_norm must be positive");
  sampling.validate();
}

void to_json(nlohmann::json& j, const PPOConfig& c) {
  j = nlohmann::json{{"kl_coef", c.kl_coef},
                     {"clip_eps", c.clip_eps},
                     {"inner_epochs", c.inner_epochs},
                     {"minibatch", c.minibatch},
                     {"rollout_batch", c.rollout_batch},
                     {"iterations", c.iterations},
                     {"actor_lr", c.actor_lr},
                     {"critic_lr", c.critic_lr},
                     {"clip_norm", c.clip_norm},
                     {"normalize_advantages", c.normalize_advantages},
                     {"old_policy", to_string(c.old_policy)},
                     {"kl_ceiling", c.kl_ceiling},
                     {"sampling", c.sampling},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, PPOConfig& c) {
  PPOConfig d;
  c.kl_coef = j.value("kl_coef", d.kl_coef);
  c.clip_eps = j.value("clip_eps", d.clip_eps);
  c.inner_epochs = j.value("inner_epochs", d.inner_epochs);
  c.minibatch = j.value("minibatch", d.minibatch);
  c.rollout_batch = j.value("rollout_batch", d.rollout_batch);
  c.iterations = j.value("iterations", d.iterations);
  c.actor_lr = j.value("actor_lr", d.actor_lr);
  c.critic_lr = j.value("critic_lr", d.critic_lr);
  c.clip_norm = j.value("clip_norm", d.clip_norm);
  c.normalize_advantages = j.value("normalize_advantages", d.normalize_advantages);
  c.old_policy = old_policy_from_string(j.value("old_policy", to_string(d.old_policy)));
  c.kl_ceiling = j.value("kl_ceiling", d.kl_ceiling);
  c.sampling = j.contains("sampling") ? j.at("sampling").get<models::SamplingConfig>() : d.sampling;
  c.seed = j.value("seed", d.seed);
}

void to_json(nlohmann::json& j, const RolloutSample& s) {
  j = nlohmann::json{{"cv", s.cv},
                     {"jd", s.jd},
                     {"actor_logprobs", s.actor_logprobs},
                     {"ref_logprobs", s.ref_logprobs},
                     {"score", s.score},
                     {"kl", s.kl},
                     {"reward", s.reward},
                     {"value", s.value},
                     {"advantage", s.advantage}};
}

double kl_term(double ratio) {
  if (!(ratio > 0.0) || !std::isfinite(ratio)) {
    throw std::invalid_argument("kl_term: probability ratio must be positive and finite, got " +
                                std::to_string(ratio));
  }
  return ratio - 1.0 - std::log(ratio);
}

double kl_estimate(std::span<const double> actor_logprobs, std::span<const double> ref_logprobs) {
  if (actor_logprobs.empty()) throw std::invalid_argument("kl_estimate: no tokens");
  if (actor_logprobs.size() != ref_logprobs.size()) {
    throw std::invalid_argument("kl_estimate: " + std::to_string(actor_logprobs.size()) + " actor vs " +
                                std::to_string(ref_logprobs.size()) + " reference log-probabilities");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < actor_logprobs.size(); ++i) {
    total += kl_term(std::exp(actor_logprobs[i] - ref_logprobs[i]));
  }
  return total / static_cast<double>(actor_logprobs.size());
}

double shape_reward(double score, double kl, double kl_coef) { return score - kl_coef * kl; }

double compute_advantage(double reward, double value) { return reward - value; }

std::vector<RolloutSample> rollout(const models::GeneratorModel& actor, const models::GeneratorModel& reference,
                                   std::span<const RolloutInput> inputs, const models::SamplingConfig& sampling,
                                   std::uint64_t seed) {
  if (inputs.empty()) throw ConfigError("rollout: empty CV batch");
  if (actor.config().vocab_size != reference.config().vocab_size) {
    throw ConfigError("rollout: actor and reference vocabularies differ");
  }
  std::vector<RolloutSample> out;
  out.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Rng rng(derive_seed(seed, i));
    auto gen = models::generate(actor, inputs[i].prompt, sampling, rng);
    RolloutSample s;
    s.cv = inputs[i].cv;
    s.prompt = inputs[i].prompt;
    s.jd = std::move(gen.tokens);
    s.actor_logprobs = std::move(gen.logprobs);
    s.ref_logprobs = models::sequence_logprobs(reference, s.prompt, s.jd);
    out.push_back(std::move(s));
  }
  return out;
}

void score_rollouts(std::vector<RolloutSample>& samples, const models::RewardModel& reward,
                    const models::CriticModel& critic, double kl_coef, bool normalize_advantages) {
  for (auto& s : samples) {
    s.score = reward.score(s.cv, s.jd);
    s.kl = kl_estimate(s.actor_logprobs, s.ref_logprobs);
    s.reward = shape_reward(s.score, s.kl, kl_coef);
    s.value = critic.value(s.cv);
    s.advantage = compute_advantage(s.reward, s.value);
  }
  if (normalize_advantages && samples.size() > 1) {
    double mean = 0.0;
    for (const auto& s : samples) mean += s.advantage;
    mean /= static_cast<double>(samples.size());
    double var = 0.0;
    for (const auto& s : samples) var += (s.advantage - mean) * (s.advantage - mean);
    var /= static_cast<double>(samples.size());
    const double sd = std::sqrt(var);
    for (auto& s : samples) s.advantage = sd > 1e-8 ? (s.advantage - mean) / sd : s.advantage - mean;
  }
}

Var clipped_objective(Var ratios, double advantage, double clip_eps) {
  Var unclipped = scale(ratios, advantage);
  Var clipped = scale(clip(ratios, 1.0 - clip_eps, 1.0 + clip_eps), advantage);
  return mean(minimum(unclipped, clipped));
}

Var actor_sample_loss(Tape& tape, const models::GeneratorModel& actor, const RolloutSample& sample,
                      std::span<const double> old_logprobs, double clip_eps) {
  if (old_logprobs.size() != sample.jd.size()) throw ShapeError("actor_sample_loss: log-probability length mismatch");
  Var lp = models::target_logprobs(tape, actor, sample.prompt, sample.jd);
  Var old = constant(tape, Tensor::vector({old_logprobs.begin(), old_logprobs.end()}));
  Var ratios = exp(subtract(lp, old));
  return scale(clipped_objective(ratios, sample.advantage, clip_eps), -1.0);
}

namespace {

std::span<const double> old_logprobs(const RolloutSample& s, OldPolicy p) {
  return p == OldPolicy::reference ? std::span<const double>(s.ref_logprobs) : std::span<const double>(s.actor_logprobs);
}

}  // namespace

Var actor_loss(Tape& tape, const models::GeneratorModel& actor, std::span<const RolloutSample> batch,
               OldPolicy old_policy, double clip_eps) {
  if (batch.empty()) throw ConfigError("actor_loss: empty minibatch");
  Var total = actor_sample_loss(tape, actor, batch[0], old_logprobs(batch[0], old_policy), clip_eps);
  for (std::size_t i = 1; i < batch.size(); ++i) {
    total = add(total, actor_sample_loss(tape, actor, batch[i], old_logprobs(batch[i], old_policy), clip_eps));
  }
  return scale(total, 1.0 / static_cast<double>(batch.size()));
}

Var critic_sample_loss(Tape& tape, const models::CriticModel& critic, const RolloutSample& sample) {
  return sum(square(subtract(constant(tape, Tensor::scalar(sample.reward)), critic.value(tape, sample.cv))));
}

Var critic_loss(Tape& tape, const models::CriticModel& critic, std::span<const RolloutSample> batch) {
  if (batch.empty()) throw ConfigError("critic_loss: empty minibatch");
  Var total = critic_sample_loss(tape, critic, batch[0]);
  for (std::size_t i = 1; i < batch.size(); ++i) total = add(total, critic_sample_loss(tape, critic, batch[i]));
  return scale(total, 1.0 / static_cast<double>(batch.size()));
}

namespace {

double mean_critic_loss(const models::CriticModel& critic, const std::vector<RolloutSample>& samples) {
  double total = 0.0;
  for (const auto& s : samples) {
    const double d = s.reward - critic.value(s.cv);
    total += d * d;
  }
  return total / static_cast<double>(samples.size());
}

}  // namespace

PPOReport ppo_train(models::GeneratorModel& actor, models::CriticModel& critic, const models::GeneratorModel& reference,
                    const models::RewardModel& reward, std::span<const RolloutInput> cvs, const PPOConfig& config,
                    const PPOHooks& hooks) {
  config.validate();
  if (cvs.empty()) throw ConfigError("ppo_train: empty CV set");
  tensor::OptimizerConfig aoc;
  aoc.learning_rate = config.actor_lr;
  aoc.clip_norm = config.clip_norm;
  tensor::OptimizerConfig coc = aoc;
  coc.learning_rate = config.critic_lr;
  tensor::Optimizer actor_opt(aoc), critic_opt(coc);
  if (hooks.actor_state) actor_opt.state() = *hooks.actor_state;
  if (hooks.critic_state) critic_opt.state() = *hooks.critic_state;

  PPOReport report;
  const std::uint64_t cv_seed = derive_seed(config.seed, "cvs");
  const std::uint64_t rollout_seed = derive_seed(config.seed, "rollout");
  const std::uint64_t shuffle_seed = derive_seed(config.seed, "shuffle");
  for (std::size_t it = hooks.start_iteration; it < config.iterations; ++it) {
    // Walk a fresh permutation of the CV set per pass; the batch for
    // iteration `it` depends only on (seed, it).
    std::vector<RolloutInput> batch_inputs;
    for (std::size_t k = 0; k < config.rollout_batch; ++k) {
      const std::size_t pos = it * config.rollout_batch + k;
      const auto order = alignment::epoch_order(cvs.size(), cv_seed, pos / cvs.size());
      batch_inputs.push_back(cvs[order[pos % cvs.size()]]);
    }
    auto samples = rollout(actor, reference, batch_inputs, config.sampling, derive_seed(rollout_seed, it));
    score_rollouts(samples, reward, critic, config.kl_coef, config.normalize_advantages);
    if (hooks.on_rollout) hooks.on_rollout(it + 1, samples);

    IterationRecord rec;
    rec.iteration = it + 1;
    for (const auto& s : samples) {
      rec.mean_score += s.score;
      rec.mean_kl += s.kl;
      rec.mean_reward += s.reward;
    }
    const double n = static_cast<double>(samples.size());
    rec.mean_score /= n;
    rec.mean_kl /= n;
    rec.mean_reward /= n;
    rec.critic_loss_before = mean_critic_loss(critic, samples);

    double actor_sum = 0.0, critic_sum = 0.0;
    std::size_t updates = 0, clipped = 0, tokens = 0;
    for (std::size_t e = 0; e < config.inner_epochs; ++e) {
      const auto order = alignment::epoch_order(samples.size(), derive_seed(shuffle_seed, it), e);
      for (auto mb : alignment::batches(order, config.minibatch)) {
        const auto a = alignment::minibatch_step(actor.parameters(), actor_opt, mb, [&](std::size_t i, Tape& tape) {
          const auto& s = samples[i];
          return actor_sample_loss(tape, actor, s, old_logprobs(s, config.old_policy), config.clip_eps);
        });
        const auto c = alignment::minibatch_step(critic.parameters(), critic_opt, mb, [&](std::size_t i, Tape& tape) {
          return critic_sample_loss(tape, critic, samples[i]);
        });
        actor_sum += a.mean_loss;
        critic_sum += c.mean_loss;
        ++updates;
      }
    }
    // Share of tokens outside the clip range under the final actor.
    for (const auto& s : samples) {
      const auto lp = models::sequence_logprobs(actor, s.prompt, s.jd);
      const auto old = old_logprobs(s, config.old_policy);
      for (std::size_t j = 0; j < lp.size(); ++j) {
        const double r = std::exp(lp[j] - old[j]);
        clipped += (r < 1.0 - config.clip_eps || r > 1.0 + config.clip_eps) ? 1 : 0;
        ++tokens;
      }
    }
    rec.actor_loss = actor_sum / static_cast<double>(updates);
    rec.critic_loss = critic_sum / static_cast<double>(updates);
    rec.critic_loss_after = mean_critic_loss(critic, samples);
    rec.clip_fraction = tokens ? static_cast<double>(clipped) / static_cast<double>(tokens) : 0.0;
    report.iterations.push_back(rec);
    if (hooks.log) {
      hooks.log->write({{"stage", "ppo"},
                        {"iteration", rec.iteration},
                        {"mean_score", rec.mean_score},
                        {"mean_kl", rec.mean_kl},
                        {"mean_reward", rec.mean_reward},
                        {"actor_loss", rec.actor_loss},
                        {"critic_loss", rec.critic_loss},
                        {"critic_loss_before", rec.critic_loss_before},
                        {"critic_loss_after", rec.critic_loss_after},
                        {"clip_fraction", rec.clip_fraction}});
    }
    if (hooks.on_iteration) hooks.on_iteration(rec.iteration, actor_opt, critic_opt);
  }
  return report;
}

PolicyEvaluation evaluate_policy(const models::GeneratorModel& policy, const models::GeneratorModel& reference,
                                 const models::RewardModel& reward, std::span<const RolloutInput> inputs,
                                 const models::SamplingConfig& sampling, std::uint64_t seed) {
  PolicyEvaluation ev;
  const auto samples = rollout(policy, reference, inputs, sampling, seed);
  for (const auto& s : samples) {
    ev.scores.push_back(reward.score(s.cv, s.jd));
    ev.kls.push_back(kl_estimate(s.actor_logprobs, s.ref_logprobs));
  }
  ev.mean_score = std::accumulate(ev.scores.begin(), ev.scores.end(), 0.0) / static_cast<double>(ev.scores.size());
  ev.mean_kl = std::accumulate(ev.kls.begin(), ev.kls.end(), 0.0) / static_cast<double>(ev.kls.size());
  return ev;
}

}  // namespace jobgen::ppo
