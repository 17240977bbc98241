#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "jobgen/alignment/trainer.hpp"
#include "jobgen/models/generator.hpp"
#include "jobgen/models/sampling.hpp"
#include "jobgen/models/scorer.hpp"

namespace jobgen::ppo {

using tensor::Tape;
using tensor::Var;

// Which log-probabilities form the denominator of the importance ratio.
enum class OldPolicy {
  reference,  // the frozen generator, never refreshed
  snapshot,   // the actor as it was when the rollout was sampled
};

std::string to_string(OldPolicy p);
OldPolicy old_policy_from_string(const std::string& s);

struct PPOConfig {
  double kl_coef = 0.1;
  double clip_eps = 0.2;
  std::size_t inner_epochs = 2;
  std::size_t minibatch = 8;
  std::size_t rollout_batch = 64;
  std::size_t iterations = 50;
  double actor_lr = 5e-5;
  double critic_lr = 1e-3;
  double clip_norm = 1.0;
  bool normalize_advantages = true;
  OldPolicy old_policy = OldPolicy::snapshot;
  // Acceptance bound on the mean KL estimate to the reference.
  double kl_ceiling = 0.5;
  models::SamplingConfig sampling;
  std::uint64_t seed = 3;

  void validate() const;
};

void to_json(nlohmann::json& j, const PPOConfig& c);
void from_json(const nlohmann::json& j, PPOConfig& c);

struct RolloutInput {
  Tokens cv;      // scored by the reward model and the critic
  Tokens prompt;  // conditions the generator
};

struct RolloutSample {
  Tokens cv;
  Tokens prompt;
  Tokens jd;
  std::vector<double> actor_logprobs;  // rollout-time actor
  std::vector<double> ref_logprobs;    // frozen reference
  double score = 0.0;
  double kl = 0.0;
  double reward = 0.0;
  double value = 0.0;
  double advantage = 0.0;
};

void to_json(nlohmann::json& j, const RolloutSample& s);

// x - 1 - ln x for a probability ratio x > 0.
double kl_term(double ratio);
// Mean over tokens of kl_term(exp(actor - ref)). Rejects empty input and
// ratios that are zero or not finite.
double kl_estimate(std::span<const double> actor_logprobs, std::span<const double> ref_logprobs);
double shape_reward(double score, double kl, double kl_coef);
double compute_advantage(double reward, double value);

// Samples one JD per input from the actor and records per-token
// log-probabilities under the actor and the reference.
std::vector<RolloutSample> rollout(const models::GeneratorModel& actor, const models::GeneratorModel& reference,
                                   std::span<const RolloutInput> inputs, const models::SamplingConfig& sampling,
                                   std::uint64_t seed);

// Fills score, kl, reward, value and advantage. Advantages are then
// mean/std-normalized across the batch when requested.
void score_rollouts(std::vector<RolloutSample>& samples, const models::RewardModel& reward,
                    const models::CriticModel& critic, double kl_coef, bool normalize_advantages);

// Clipped surrogate of one sample, negated: -(1/L) sum_j min(CE_j a, clip(CE_j) a)
// with CE_j = exp(logp_actor_j - old_logprobs_j).
Var actor_sample_loss(Tape& tape, const models::GeneratorModel& actor, const RolloutSample& sample,
                      std::span<const double> old_logprobs, double clip_eps);
// Negated minibatch mean of the clipped surrogate, on one tape.
Var actor_loss(Tape& tape, const models::GeneratorModel& actor, std::span<const RolloutSample> batch,
               OldPolicy old_policy, double clip_eps);
// Same objective with the per-token ratios supplied directly, for checking the
// clip semantics in isolation.
Var clipped_objective(Var ratios, double advantage, double clip_eps);

// Mean over the minibatch of (r_i - U^c(C_i))^2.
Var critic_loss(Tape& tape, const models::CriticModel& critic, std::span<const RolloutSample> batch);
Var critic_sample_loss(Tape& tape, const models::CriticModel& critic, const RolloutSample& sample);

struct IterationRecord {
  std::size_t iteration = 0;
  double mean_score = 0.0;
  double mean_kl = 0.0;
  double mean_reward = 0.0;
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  // Critic loss on this iteration's rollout before and after the updates.
  double critic_loss_before = 0.0;
  double critic_loss_after = 0.0;
  double clip_fraction = 0.0;
};

struct PPOReport {
  std::vector<IterationRecord> iterations;
};

struct PPOHooks {
  MetricsLog* log = nullptr;
  // Called after each completed iteration (1-based).
  std::function<void(std::size_t iteration, const tensor::Optimizer& actor_opt, const tensor::Optimizer& critic_opt)>
      on_iteration;
  std::size_t start_iteration = 0;
  const tensor::OptimizerState* actor_state = nullptr;
  const tensor::OptimizerState* critic_state = nullptr;
  // Receives every scored rollout batch, for audit dumps.
  std::function<void(std::size_t iteration, const std::vector<RolloutSample>&)> on_rollout;
};

PPOReport ppo_train(models::GeneratorModel& actor, models::CriticModel& critic, const models::GeneratorModel& reference,
                    const models::RewardModel& reward, std::span<const RolloutInput> cvs, const PPOConfig& config,
                    const PPOHooks& hooks = {});

struct PolicyEvaluation {
  std::vector<double> scores;  // per input, same order
  std::vector<double> kls;     // KL estimate to the reference
  double mean_score = 0.0;
  double mean_kl = 0.0;
};

// Scores one sampled JD per input; input i always uses the stream
// derive_seed(seed, i), so two policies can be compared pairwise.
PolicyEvaluation evaluate_policy(const models::GeneratorModel& policy, const models::GeneratorModel& reference,
                                 const models::RewardModel& reward, std::span<const RolloutInput> inputs,
                                 const models::SamplingConfig& sampling, std::uint64_t seed);

}  // namespace jobgen::ppo
