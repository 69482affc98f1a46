// Copyright 2026 The PromptForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "promptforge/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "promptforge/error.hpp"
#include "promptforge/optim.hpp"
#include "promptforge/parallel.hpp"

namespace promptforge::ppo {

void PpoConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::kInvalidConfig, "ppo: " + m); };
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (batch_size == 0 || accumulation == 0) fail("batch_size and accumulation must be >= 1");
  if (epochs == 0 && max_steps == 0) fail("epochs must be >= 1");
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) fail("clip_epsilon must lie in (0, 1)");
  if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma must lie in (0, 1]");
  if (!(lambda >= 0.0 && lambda <= 1.0)) fail("lambda must lie in [0, 1]");
  if (!(value_coef >= 0.0)) fail("value_coef must be >= 0");
  if (inner_epochs == 0) fail("inner_epochs must be >= 1");
  if (rollouts_per_prompt == 0) fail("rollouts_per_prompt must be >= 1");
  if (adapter_rank == 0) fail("adapter_rank must be >= 1");
  decode.validate();
  reward.validate();
}

nlohmann::json PpoConfig::to_json() const {
  return {{"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"accumulation", accumulation},
          {"epochs", epochs},
          {"max_steps", max_steps},
          {"clip_epsilon", clip_epsilon},
          {"gamma", gamma},
          {"lambda", lambda},
          {"value_coef", value_coef},
          {"inner_epochs", inner_epochs},
          {"rollouts_per_prompt", rollouts_per_prompt},
          {"normalize_advantages", normalize_advantages},
          {"adapter_rank", adapter_rank},
          {"adapter_targets", adapter_targets},
          {"decode", decode.to_json()},
          {"checkpoint_every", checkpoint_every},
          {"seed", seed}};
}

PpoConfig PpoConfig::from_json(const nlohmann::json& j) {
  PpoConfig c;
  try {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.accumulation = j.value("accumulation", c.accumulation);
    c.epochs = j.value("epochs", c.epochs);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.clip_epsilon = j.value("clip_epsilon", c.clip_epsilon);
    c.gamma = j.value("gamma", c.gamma);
    c.lambda = j.value("lambda", c.lambda);
    c.value_coef = j.value("value_coef", c.value_coef);
    c.inner_epochs = j.value("inner_epochs", c.inner_epochs);
    c.rollouts_per_prompt = j.value("rollouts_per_prompt", c.rollouts_per_prompt);
    c.normalize_advantages = j.value("normalize_advantages", c.normalize_advantages);
    c.adapter_rank = j.value("adapter_rank", c.adapter_rank);
    c.adapter_targets = j.value("adapter_targets", c.adapter_targets);
    if (j.contains("decode")) c.decode = policy::DecodeConfig::from_json(j["decode"]);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("ppo: ") + e.what());
  }
  c.validate();
  return c;
}

std::size_t RolloutBatch::token_count() const {
  std::size_t n = 0;
  for (const auto& r : rollouts) n += r.response.size();
  return n;
}

std::vector<double> reward_stream(const Rollout& r, const reward::RewardConfig& cfg) {
  const std::size_t T = r.response.size();
  std::vector<double> rewards(T, 0.0);
  if (T == 0) return rewards;
  if (cfg.penalty_form == reward::PenaltyForm::kLogRatio) {
    for (std::size_t t = 0; t < T; ++t) rewards[t] = -cfg.beta * (r.logp_old[t] - r.logp_ref[t]);
  } else {
    rewards[T - 1] -= r.breakdown.penalty;
  }
  rewards[T - 1] += r.breakdown.s_toxic + r.breakdown.s_alt;
  return rewards;
}

namespace {

// Log-probabilities and values along the response, read from one forward pass.
struct ResponseEval {
  policy::ForwardOutput out;
  std::size_t first_row = 0;
};

ResponseEval eval_response(const PolicyParameters& params, std::span<const TokenId> prompt,
                           std::span<const TokenId> response) {
  auto f = policy::frame(prompt, response, false);
  std::span<const TokenId> input(f.tokens.data(), f.tokens.size() - 1);
  return {policy::forward_logits(params, input), f.target_begin - 1};
}

}  // namespace

RolloutBatch collect_rollouts(const PolicyParameters& policy, const PolicyParameters& reference,
                              const text::Vocabulary& vocab, const reward::ScorerBundle& bundle,
                              std::span<const text::Prompt> prompts, const PpoConfig& cfg,
                              const Rng& rng) {
  if (prompts.empty()) throw Error(ErrorCode::kEmptyPromptSet, "no prompts to roll out");
  if (!policy.has_value_head()) throw Error(ErrorCode::kValueHeadDisabled, "policy has no value head");
  const auto rcfg = cfg.reward_config();
  RolloutBatch batch;
  batch.rollouts.resize(prompts.size() * cfg.rollouts_per_prompt);
  parallel_for(batch.rollouts.size(), [&](std::size_t i) {
    const auto& x = prompts[i / cfg.rollouts_per_prompt];
    Rng stream = rng.fork(i);
    Rng sample_rng = stream.fork("sample");
    Rng reward_rng = stream.fork("reward");
    auto cont = policy::sample_continuation(policy, x.tokens, cfg.decode, sample_rng);
    Rollout r;
    r.prompt_text = x.raw;
    r.prompt = x.tokens;
    r.response = cont.response();
    r.rewrite_text = text::decode(vocab, cont.tokens);
    if (!r.response.empty()) {
      const auto pol = eval_response(policy, r.prompt, r.response);
      const auto ref = eval_response(reference, r.prompt, r.response);
      for (std::size_t t = 0; t < r.response.size(); ++t) {
        const auto y = static_cast<std::size_t>(r.response[t]);
        r.logp_old.push_back(policy::log_softmax_at(pol.out.row(pol.first_row + t), y));
        r.logp_ref.push_back(policy::log_softmax_at(ref.out.row(ref.first_row + t), y));
        r.values.push_back(pol.out.values[pol.first_row + t]);
      }
    }
    const double lp = std::accumulate(r.logp_old.begin(), r.logp_old.end(), 0.0);
    const double lq = std::accumulate(r.logp_ref.begin(), r.logp_ref.end(), 0.0);
    r.breakdown = reward::score_rewrite(r.prompt_text, r.rewrite_text, bundle, rcfg, lp, lq, reward_rng);
    r.rewards = reward_stream(r, rcfg);
    batch.rollouts[i] = std::move(r);
  });
  return batch;
}

void compute_gae(RolloutBatch& batch, double gamma, double lambda) {
  for (auto& r : batch.rollouts) {
    const std::size_t T = r.rewards.size();
    r.advantages.assign(T, 0.0);
    r.returns.assign(T, 0.0);
    double next_adv = 0.0;
    for (std::size_t k = T; k-- > 0;) {
      const double next_v = k + 1 < T ? r.values[k + 1] : 0.0;
      const double delta = r.rewards[k] + gamma * next_v - r.values[k];
      next_adv = delta + gamma * lambda * next_adv;
      r.advantages[k] = next_adv;
      r.returns[k] = next_adv + r.values[k];
    }
  }
}

std::vector<std::vector<double>> batch_advantages(const RolloutBatch& batch, bool normalize) {
  std::vector<std::vector<double>> adv;
  adv.reserve(batch.rollouts.size());
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : batch.rollouts) {
    adv.push_back(r.advantages);
    for (double a : r.advantages) sum += a;
    n += r.advantages.size();
  }
  if (!normalize || n == 0) return adv;
  const double mean = sum / static_cast<double>(n);
  double var = 0.0;
  for (const auto& a : adv) {
    for (double v : a) var += (v - mean) * (v - mean);
  }
  const double sd = std::sqrt(var / static_cast<double>(n));
  for (auto& a : adv) {
    for (auto& v : a) v = (v - mean) / (sd + 1e-8);
  }
  return adv;
}

namespace {

struct TokenTerms {
  double policy = 0.0;
  double value = 0.0;
  // d(policy term)/d(logp_new) and d(value term)/d(V)
  double dlogp = 0.0;
  double dvalue = 0.0;
};

TokenTerms token_terms(double logp_new, double logp_old, double adv, double value, double ret,
                       const PpoConfig& cfg, double n_tokens) {
  const double rho = std::exp(logp_new - logp_old);
  if (!std::isfinite(rho)) throw Error(ErrorCode::kNonFiniteRatio, "probability ratio overflow");
  const double clipped = std::clamp(rho, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
  const double unclipped_obj = rho * adv;
  const double clipped_obj = clipped * adv;
  TokenTerms t;
  if (unclipped_obj <= clipped_obj) {
    t.policy = -unclipped_obj / n_tokens;
    t.dlogp = -rho * adv / n_tokens;
  } else {
    t.policy = -clipped_obj / n_tokens;
  }
  const double err = value - ret;
  t.value = cfg.value_coef * err * err / n_tokens;
  t.dvalue = 2.0 * cfg.value_coef * err / n_tokens;
  return t;
}

}  // namespace

PpoLoss ppo_clip_loss(const PolicyParameters& params, const RolloutBatch& batch,
                      const PpoConfig& cfg) {
  const auto adv = batch_advantages(batch, cfg.normalize_advantages);
  const double n = static_cast<double>(batch.token_count());
  PpoLoss loss;
  if (n == 0) return loss;
  for (std::size_t i = 0; i < batch.rollouts.size(); ++i) {
    const auto& r = batch.rollouts[i];
    if (r.response.empty()) continue;
    const auto ev = eval_response(params, r.prompt, r.response);
    for (std::size_t t = 0; t < r.response.size(); ++t) {
      const std::size_t row = ev.first_row + t;
      const double lp = policy::log_softmax_at(ev.out.row(row), static_cast<std::size_t>(r.response[t]));
      const double v = ev.out.values.empty() ? 0.0 : ev.out.values[row];
      const auto tt = token_terms(lp, r.logp_old[t], adv[i][t], v, r.returns[t], cfg, n);
      loss.policy += tt.policy;
      loss.value += tt.value;
    }
  }
  loss.total = loss.policy + loss.value;
  return loss;
}

PpoGradient ppo_gradient(const PolicyParameters& params, const RolloutBatch& batch,
                         const std::vector<std::vector<double>>& advantages, std::size_t begin,
                         std::size_t end, const PpoConfig& cfg) {
  const double n = static_cast<double>(batch.token_count());
  const std::size_t V = params.config().vocab_size;
  std::vector<std::vector<TokenId>> inputs;
  std::vector<std::size_t> which;
  std::vector<std::size_t> first_rows;
  for (std::size_t i = begin; i < end; ++i) {
    const auto& r = batch.rollouts[i];
    if (r.response.empty()) continue;
    auto f = policy::frame(r.prompt, r.response, false);
    f.tokens.pop_back();
    inputs.push_back(std::move(f.tokens));
    which.push_back(i);
    first_rows.push_back(f.target_begin - 1);
  }
  std::vector<PpoLoss> parts(inputs.size());
  auto loss = [&](std::size_t k, const policy::ForwardOutput& out, policy::OutputGradient& g) {
    const auto& r = batch.rollouts[which[k]];
    const auto& adv = advantages[which[k]];
    PpoLoss& part = parts[k];
    for (std::size_t t = 0; t < r.response.size(); ++t) {
      const std::size_t row = first_rows[k] + t;
      const auto y = static_cast<std::size_t>(r.response[t]);
      const auto logits = out.row(row);
      const double lp = policy::log_softmax_at(logits, y);
      const double v = out.values.empty() ? 0.0 : out.values[row];
      const auto tt = token_terms(lp, r.logp_old[t], adv[t], v, r.returns[t], cfg, n);
      part.policy += tt.policy;
      part.value += tt.value;
      if (tt.dlogp != 0.0) {
        const auto p = policy::softmax(logits);
        double* d = g.dlogits.data() + row * V;
        for (std::size_t c = 0; c < V; ++c) d[c] -= tt.dlogp * p[c];
        d[y] += tt.dlogp;
      }
      if (!g.dvalues.empty()) g.dvalues[row] += tt.dvalue;
    }
    return part.policy + part.value;
  };
  PpoGradient result;
  auto lg = policy::grad_loss(params, inputs, loss);
  result.grads = std::move(lg.grads);
  for (const auto& p : parts) {
    result.loss.policy += p.policy;
    result.loss.value += p.value;
  }
  result.loss.total = result.loss.policy + result.loss.value;
  return result;
}

nlohmann::ordered_json PpoMetric::to_json() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["mean_total_reward"] = mean_total_reward;
  j["mean_s_toxic"] = mean_s_toxic;
  j["mean_s_alt"] = mean_s_alt;
  j["mean_penalty"] = mean_penalty;
  j["policy_loss"] = policy_loss;
  j["value_loss"] = value_loss;
  j["mean_log_ratio"] = mean_log_ratio;
  j["mean_abs_log_ratio"] = mean_abs_log_ratio;
  return j;
}

std::size_t ppo_steps(std::size_t n_prompts, const PpoConfig& cfg) {
  if (cfg.max_steps > 0) return cfg.max_steps;
  const std::size_t per = cfg.batch_size * cfg.accumulation;
  return cfg.epochs * ((n_prompts + per - 1) / per);
}

PolicyParameters make_trainable(const PolicyParameters& sft_params, const PpoConfig& cfg,
                                const Rng& rng) {
  Rng arng = rng.fork("adapters");
  auto p = policy::attach_adapters(policy::with_value_head(sft_params), cfg.adapter_rank,
                                   cfg.adapter_targets, arng);
  p.set_role(policy::Role::kTrainablePolicy);
  return p;
}

PpoResult train_ppo(const PolicyParameters& sft_params, const foundry::DatasetSplits& split,
                    const text::Vocabulary& vocab, const reward::ScorerBundle& bundle,
                    const PpoConfig& cfg, Rng& rng, const PpoCheckpointHook& on_checkpoint) {
  cfg.validate();
  if (split.ppo.empty()) throw Error(ErrorCode::kEmptyDataset, "the PPO split is empty");
  if (sft_params.role() != policy::Role::kSftReference) {
    throw Error(ErrorCode::kInvalidConfig, "PPO must start from an sft-reference policy");
  }
  const PolicyParameters& reference = sft_params;
  PpoResult result{make_trainable(sft_params, cfg, rng), {}};
  auto& pol = result.policy;
  optim::OptimizerState opt(pol.values().size());

  std::vector<text::Prompt> prompts;
  for (const auto& p : split.ppo) prompts.push_back(text::make_prompt(vocab, p.prompt.raw));
  const std::size_t n = prompts.size();
  const std::size_t per = cfg.batch_size * cfg.accumulation;
  const std::size_t steps = ppo_steps(n, cfg);
  const Rng order_rng = rng.fork("order");
  const Rng rollout_rng = rng.fork("rollouts");

  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  std::size_t epoch = 0;
  for (std::size_t step = 0; step < steps; ++step) {
    std::vector<text::Prompt> batch_prompts;
    while (batch_prompts.size() < per) {
      if (cursor == order.size()) {
        if (!batch_prompts.empty() && cfg.max_steps == 0) break;
        order.resize(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        order_rng.fork(epoch++).shuffle(order);
        cursor = 0;
      }
      batch_prompts.push_back(prompts[order[cursor++]]);
    }
    auto batch = collect_rollouts(pol, reference, vocab, bundle, batch_prompts, cfg,
                                  rollout_rng.fork(step));
    compute_gae(batch, cfg.gamma, cfg.lambda);
    const auto adv = batch_advantages(batch, cfg.normalize_advantages);

    PpoMetric m;
    m.step = step + 1;
    const double nr = static_cast<double>(batch.rollouts.size());
    double lr_sum = 0.0;
    double abs_sum = 0.0;
    for (const auto& r : batch.rollouts) {
      m.mean_total_reward += r.breakdown.total / nr;
      m.mean_s_toxic += r.breakdown.s_toxic / nr;
      m.mean_s_alt += r.breakdown.s_alt / nr;
      m.mean_penalty += r.breakdown.penalty / nr;
      for (std::size_t t = 0; t < r.response.size(); ++t) {
        const double d = r.logp_old[t] - r.logp_ref[t];
        lr_sum += d;
        abs_sum += std::abs(d);
      }
    }
    const double ntok = static_cast<double>(batch.token_count());
    if (ntok > 0) {
      m.mean_log_ratio = lr_sum / ntok;
      m.mean_abs_log_ratio = abs_sum / ntok;
    }

    for (std::size_t inner = 0; inner < cfg.inner_epochs; ++inner) {
      policy::GradientSet grads(pol);
      PpoLoss loss;
      for (std::size_t b0 = 0; b0 < batch.rollouts.size(); b0 += cfg.batch_size) {
        const std::size_t b1 = std::min(batch.rollouts.size(), b0 + cfg.batch_size);
        auto g = ppo_gradient(pol, batch, adv, b0, b1, cfg);
        grads.add(g.grads);
        loss.policy += g.loss.policy;
        loss.value += g.loss.value;
      }
      if (inner == 0) {
        m.policy_loss = loss.policy;
        m.value_loss = loss.value;
      }
      optim::optimizer_step(opt, pol, grads, cfg.learning_rate);
    }
    result.log.push_back(m);
    if (on_checkpoint && cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0) {
      on_checkpoint(step + 1, pol);
    }
  }
  return result;
}

double mean_abs_log_ratio(const PolicyParameters& policy, const PolicyParameters& reference,
                          std::span<const text::Prompt> prompts,
                          const policy::DecodeConfig& decode, const Rng& rng,
                          std::size_t samples_per_prompt) {
  const std::size_t n = prompts.size() * samples_per_prompt;
  std::vector<double> sums(n, 0.0);
  std::vector<std::size_t> counts(n, 0);
  parallel_for(n, [&](std::size_t i) {
    const auto& x = prompts[i / samples_per_prompt];
    Rng r = rng.fork(i);
    auto cont = policy::sample_continuation(policy, x.tokens, decode, r);
    const auto resp = cont.response();
    const auto ref = policy::response_logprobs(reference, x.tokens, resp);
    for (std::size_t t = 0; t < resp.size(); ++t) sums[i] += std::abs(cont.logprobs[t] - ref[t]);
    counts[i] = resp.size();
  });
  const double total = std::accumulate(sums.begin(), sums.end(), 0.0);
  const auto tokens = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  return tokens ? total / static_cast<double>(tokens) : 0.0;
}

}  // namespace promptforge::ppo
