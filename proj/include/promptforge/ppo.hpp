// Copyright 2026 The PromptForge Authors
// SPDX-License-Identifier: Apache-2.0

// Clipped-surrogate policy optimization of the rewriter against the composite
// reward, starting from (and regularized toward) the SFT reference.

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "promptforge/pair_foundry.hpp"
#include "promptforge/policy.hpp"
#include "promptforge/reward.hpp"

namespace promptforge::ppo {

using policy::PolicyParameters;
using text::TokenId;

struct PpoConfig {
  double learning_rate = 1.9e-5;
  std::size_t batch_size = 4;
  std::size_t accumulation = 4;
  std::size_t epochs = 1;
  /// When positive, exactly this many rollout/update rounds are run and
  /// `epochs` is ignored.
  std::size_t max_steps = 0;
  double clip_epsilon = 0.2;
  double gamma = 1.0;
  double lambda = 0.95;
  double value_coef = 0.5;
  std::size_t inner_epochs = 4;
  std::size_t rollouts_per_prompt = 1;
  bool normalize_advantages = true;
  std::size_t adapter_rank = 4;
  std::vector<std::string> adapter_targets = {"q", "v"};
  policy::DecodeConfig decode;
  std::size_t checkpoint_every = 0;
  std::uint64_t seed = 0;
  /// beta, samples per reward and penalty form live here. Serialized
  /// separately from the other fields.
  reward::RewardConfig reward;

  void validate() const;
  nlohmann::json to_json() const;
  static PpoConfig from_json(const nlohmann::json& j);
  const reward::RewardConfig& reward_config() const { return reward; }
};

struct Rollout {
  std::string prompt_text;
  std::vector<TokenId> prompt;
  /// Sampled tokens, ending in EOS when the continuation terminated.
  std::vector<TokenId> response;
  std::string rewrite_text;
  std::vector<double> logp_old;
  std::vector<double> logp_ref;
  std::vector<double> values;
  std::vector<double> rewards;
  std::vector<double> advantages;
  std::vector<double> returns;
  reward::RewardBreakdown breakdown;
};

struct RolloutBatch {
  std::vector<Rollout> rollouts;

  std::size_t token_count() const;
};

/// Per-token rewards of one rollout: -beta * (logp_old - logp_ref) at every
/// token under the log-ratio form; under the ratio form the whole
/// sequence-level penalty sits on the last token. s_toxic + s_alt is added at
/// the last token, so the stream sums to breakdown.total.
std::vector<double> reward_stream(const Rollout& r, const reward::RewardConfig& cfg);

/// Samples `rollouts_per_prompt` rewrites per prompt and scores them. Throws
/// EmptyPromptSet, ValueHeadDisabled.
RolloutBatch collect_rollouts(const PolicyParameters& policy, const PolicyParameters& reference,
                              const text::Vocabulary& vocab, const reward::ScorerBundle& bundle,
                              std::span<const text::Prompt> prompts, const PpoConfig& cfg,
                              const Rng& rng);

/// Fills advantages and returns of every rollout.
void compute_gae(RolloutBatch& batch, double gamma, double lambda);

/// Advantages of the whole batch, mean/variance-normalized when `normalize`.
std::vector<std::vector<double>> batch_advantages(const RolloutBatch& batch, bool normalize);

struct PpoLoss {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
};

/// Token-mean clipped surrogate plus value_coef times the token-mean squared
/// value error. Throws NonFiniteRatio.
PpoLoss ppo_clip_loss(const PolicyParameters& params, const RolloutBatch& batch,
                      const PpoConfig& cfg);

/// Gradient of the same objective restricted to rollouts [begin, end), with
/// token means taken over the full batch so micro-batch gradients add up.
struct PpoGradient {
  PpoLoss loss;
  policy::GradientSet grads;
};
PpoGradient ppo_gradient(const PolicyParameters& params, const RolloutBatch& batch,
                         const std::vector<std::vector<double>>& advantages, std::size_t begin,
                         std::size_t end, const PpoConfig& cfg);

struct PpoMetric {
  std::size_t step = 0;
  double mean_total_reward = 0.0;
  double mean_s_toxic = 0.0;
  double mean_s_alt = 0.0;
  double mean_penalty = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double mean_log_ratio = 0.0;
  double mean_abs_log_ratio = 0.0;

  nlohmann::ordered_json to_json() const;
};

struct PpoResult {
  PolicyParameters policy;
  std::vector<PpoMetric> log;
};

std::size_t ppo_steps(std::size_t n_prompts, const PpoConfig& cfg);

/// Policy with adapters and a value head on top of the SFT reference.
PolicyParameters make_trainable(const PolicyParameters& sft_params, const PpoConfig& cfg,
                                const Rng& rng);

using PpoCheckpointHook = std::function<void(std::size_t step, const PolicyParameters&)>;

/// Throws EmptyDataset, InvalidConfig (reference role).
PpoResult train_ppo(const PolicyParameters& sft_params, const foundry::DatasetSplits& split,
                    const text::Vocabulary& vocab, const reward::ScorerBundle& bundle,
                    const PpoConfig& cfg, Rng& rng, const PpoCheckpointHook& on_checkpoint = {});

/// Mean per-token |log pi - log pi_ref| over sampled rewrites of `prompts`.
double mean_abs_log_ratio(const PolicyParameters& policy, const PolicyParameters& reference,
                          std::span<const text::Prompt> prompts,
                          const policy::DecodeConfig& decode, const Rng& rng,
                          std::size_t samples_per_prompt = 1);

}  // namespace promptforge::ppo
