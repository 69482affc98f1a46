// Copyright 2026 The PromptForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "promptforge/reward.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include "promptforge/error.hpp"

namespace promptforge::reward {

std::string_view to_string(PenaltyForm f) {
  return f == PenaltyForm::kRatio ? "ratio" : "log-ratio";
}

PenaltyForm penalty_form_from_string(std::string_view s) {
  if (s == "ratio") return PenaltyForm::kRatio;
  if (s == "log-ratio") return PenaltyForm::kLogRatio;
  throw Error(ErrorCode::kInvalidConfig, "unknown penalty form '" + std::string(s) + "'");
}

void RewardConfig::validate() const {
  if (!(alignment_cap > 0.0)) throw Error(ErrorCode::kInvalidConfig, "alignment cap must be > 0");
  if (!(beta >= 0.0)) throw Error(ErrorCode::kInvalidConfig, "beta must be >= 0");
  if (samples_per_prompt < 1) throw Error(ErrorCode::kZeroSamples, "samples_per_prompt is 0");
}

nlohmann::json RewardConfig::to_json() const {
  return nlohmann::json{{"toxic_slope", toxic_slope},
                        {"toxic_offset", toxic_offset},
                        {"alignment_cap", alignment_cap},
                        {"beta", beta},
                        {"samples_per_prompt", samples_per_prompt},
                        {"penalty_form", to_string(penalty_form)}};
}

RewardConfig RewardConfig::from_json(const nlohmann::json& j) {
  RewardConfig c;
  c.toxic_slope = j.value("toxic_slope", c.toxic_slope);
  c.toxic_offset = j.value("toxic_offset", c.toxic_offset);
  c.alignment_cap = j.value("alignment_cap", c.alignment_cap);
  c.beta = j.value("beta", c.beta);
  c.samples_per_prompt = j.value("samples_per_prompt", c.samples_per_prompt);
  if (j.contains("penalty_form")) {
    c.penalty_form = penalty_form_from_string(j["penalty_form"].get<std::string>());
  }
  return c;
}

nlohmann::json RewardBreakdown::to_json() const {
  return nlohmann::json{{"s_toxic", s_toxic},         {"s_alt", s_alt},
                        {"penalty", penalty},         {"total", total},
                        {"beta", beta},               {"logp_policy", logp_policy},
                        {"logp_reference", logp_reference}, {"confidences", confidences},
                        {"similarities", similarities}};
}

double toxic_score(std::span<const double> confidences, const RewardConfig& cfg) {
  if (confidences.empty()) throw Error(ErrorCode::kEmptySampleSet, "no confidences");
  double sum = 0.0;
  for (double f : confidences) sum += cfg.toxic_slope * f + cfg.toxic_offset;
  return sum / static_cast<double>(confidences.size());
}

double alignment_score(std::span<const double> similarities, const RewardConfig& cfg) {
  if (similarities.empty()) throw Error(ErrorCode::kEmptySampleSet, "no similarities");
  double sum = 0.0;
  for (double s : similarities) sum += std::min(cfg.alignment_cap, s);
  return sum / static_cast<double>(similarities.size());
}

double policy_penalty(double logp_policy, double logp_reference, double beta, PenaltyForm form) {
  if (!std::isfinite(logp_policy) || !std::isfinite(logp_reference) || !std::isfinite(beta)) {
    throw Error(ErrorCode::kNonFiniteInput, "penalty inputs must be finite");
  }
  const double diff = logp_policy - logp_reference;
  return form == PenaltyForm::kRatio ? beta * std::exp(diff) : beta * diff;
}

RewardBreakdown score_rewrite(std::string_view original, std::string_view rewrite,
                              const ScorerBundle& bundle, const RewardConfig& cfg,
                              double logp_policy, double logp_reference, Rng& rng) {
  if (cfg.samples_per_prompt == 0) throw Error(ErrorCode::kZeroSamples, "k = 0");
  cfg.validate();
  static std::mutex serial;
  std::unique_lock<std::mutex> lock(serial, std::defer_lock);
  if (!bundle.thread_safe()) lock.lock();

  RewardBreakdown b;
  b.beta = cfg.beta;
  b.logp_policy = logp_policy;
  b.logp_reference = logp_reference;
  b.confidences.reserve(cfg.samples_per_prompt);
  b.similarities.reserve(cfg.samples_per_prompt);
  for (std::size_t i = 0; i < cfg.samples_per_prompt; ++i) {
    auto sample = bundle.generate(rewrite, i, rng);
    b.confidences.push_back(std::clamp(bundle.toxicity(sample), 0.0, 1.0));
    b.similarities.push_back(bundle.alignment(original, sample));
  }
  b.s_toxic = toxic_score(b.confidences, cfg);
  b.s_alt = alignment_score(b.similarities, cfg);
  b.penalty = policy_penalty(logp_policy, logp_reference, cfg.beta, cfg.penalty_form);
  b.total = b.s_toxic + b.s_alt - b.penalty;
  return b;
}

RewardBreakdown total_reward(const text::Prompt& x, const text::Prompt& x_prime,
                             const ScorerBundle& bundle, const policy::PolicyParameters& policy,
                             const policy::PolicyParameters& reference, const RewardConfig& cfg,
                             Rng& rng) {
  if (cfg.samples_per_prompt == 0) throw Error(ErrorCode::kZeroSamples, "k = 0");
  const double lp = policy::sequence_logprob(policy, x.tokens, x_prime.tokens);
  const double lr = policy::sequence_logprob(reference, x.tokens, x_prime.tokens);
  return score_rewrite(x.raw, x_prime.raw, bundle, cfg, lp, lr, rng);
}

}  // namespace promptforge::reward
