// Copyright 2026 The PromptForge Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "promptforge/ppo.hpp"

using namespace promptforge;
using namespace promptforge::ppo;

namespace {

using text::Vocabulary;

policy::PolicyParameters model(std::uint64_t seed) {
  Rng rng(seed);
  return pf_test::noisy(policy::init_params(pf_test::tiny_config(), rng), seed + 100);
}

// One rollout whose logp_old is offset from the current model by `shift`.
Rollout rollout_at(const PolicyParameters& p, std::vector<TokenId> prompt, std::vector<TokenId> words,
                   double shift) {
  Rollout r;
  r.prompt = std::move(prompt);
  r.response = words;
  r.response.push_back(Vocabulary::eos());
  std::vector<TokenId> prefix;
  for (std::size_t t = 0; t < r.response.size(); ++t) {
    const double before = t == 0 ? 0.0 : policy::prefix_logprob(p, r.prompt, prefix);
    double upto;
    if (t + 1 == r.response.size()) {
      upto = policy::sequence_logprob(p, r.prompt, prefix);
    } else {
      prefix.push_back(r.response[t]);
      upto = policy::prefix_logprob(p, r.prompt, prefix);
    }
    r.logp_old.push_back(upto - before - shift);
    r.logp_ref.push_back(upto - before);
  }
  r.values.assign(r.response.size(), 0.0);
  r.returns.assign(r.response.size(), 0.0);
  r.advantages.assign(r.response.size(), 0.0);
  return r;
}

PpoConfig plain_cfg() {
  PpoConfig c;
  c.normalize_advantages = false;
  c.value_coef = 0.0;
  return c;
}

class CountingBundle : public reward::ScorerBundle {
 public:
  reward::GeneratedSample generate(std::string_view prompt, std::size_t i, Rng& rng) const override {
    return {{rng.uniform()}, std::string(prompt), i};
  }
  double toxicity(const reward::GeneratedSample& s) const override {
    return s.source.find("bad") == std::string::npos ? 0.1 : 0.9;
  }
  double alignment(std::string_view, const reward::GeneratedSample& s) const override { return s.embedding[0]; }
};

Vocabulary toy_vocab() { return Vocabulary::from_words({"a", "bad", "normal", "apple"}); }

foundry::DatasetSplits ppo_split() {
  const auto v = toy_vocab();
  foundry::DatasetSplits s;
  for (const char* x : {"a bad apple", "bad apple", "a bad bad apple", "apple bad"}) {
    s.ppo.push_back({text::make_prompt(v, x), std::nullopt});
  }
  return s;
}

PolicyParameters reference_model() {
  auto c = pf_test::tiny_config(toy_vocab().size());
  c.value_head = false;
  Rng rng(3);
  auto p = policy::init_params(c, rng);
  p.set_role(policy::Role::kSftReference);
  return p;
}

}  // namespace

TEST(Gae, TelescopesToDiscountedReturnAtLambdaOne) {
  RolloutBatch b;
  Rollout r;
  r.rewards = {0.5, -1.0, 2.0, 0.25};
  r.values = {0.3, -0.2, 1.1, 0.7};
  b.rollouts.push_back(r);
  compute_gae(b, 0.9, 1.0);
  const auto& out = b.rollouts[0];
  for (std::size_t t = 0; t < 4; ++t) {
    double g = 0.0;
    double disc = 1.0;
    for (std::size_t k = t; k < 4; ++k, disc *= 0.9) g += disc * r.rewards[k];
    EXPECT_NEAR(out.returns[t], g, 1e-12);
    EXPECT_NEAR(out.advantages[t], g - r.values[t], 1e-12);
  }
  compute_gae(b, 0.9, 0.0);
  EXPECT_NEAR(b.rollouts[0].advantages[1], -1.0 + 0.9 * 1.1 + 0.2, 1e-12);
  EXPECT_NEAR(b.rollouts[0].advantages[3], 0.25 - 0.7, 1e-12);
}

TEST(BatchAdvantages, NormalizedToZeroMeanUnitVariance) {
  RolloutBatch b;
  b.rollouts.resize(2);
  b.rollouts[0].advantages = {1.0, 2.0, 3.0};
  b.rollouts[1].advantages = {-4.0};
  const auto raw = batch_advantages(b, false);
  EXPECT_EQ(raw[1][0], -4.0);
  const auto n = batch_advantages(b, true);
  double s = 0.0, s2 = 0.0;
  for (const auto& a : n) {
    for (double v : a) {
      s += v;
      s2 += v * v;
    }
  }
  EXPECT_NEAR(s / 4.0, 0.0, 1e-12);
  EXPECT_NEAR(s2 / 4.0, 1.0, 1e-6);
}

TEST(RewardStream, SumsToTotalReward) {
  Rollout r;
  r.response = {5, 6, 7, Vocabulary::eos()};
  r.logp_old = {-1.0, -0.5, -2.0, -0.1};
  r.logp_ref = {-1.5, -0.5, -1.0, -0.3};
  r.breakdown.s_toxic = 3.0;
  r.breakdown.s_alt = 0.2;
  reward::RewardConfig cfg;
  cfg.beta = 0.4;
  for (auto form : {reward::PenaltyForm::kRatio, reward::PenaltyForm::kLogRatio}) {
    cfg.penalty_form = form;
    const double lp = std::accumulate(r.logp_old.begin(), r.logp_old.end(), 0.0);
    const double lq = std::accumulate(r.logp_ref.begin(), r.logp_ref.end(), 0.0);
    r.breakdown.penalty = reward::policy_penalty(lp, lq, cfg.beta, form);
    r.breakdown.total = r.breakdown.s_toxic + r.breakdown.s_alt - r.breakdown.penalty;
    const auto s = reward_stream(r, cfg);
    ASSERT_EQ(s.size(), 4u);
    EXPECT_NEAR(std::accumulate(s.begin(), s.end(), 0.0), r.breakdown.total, 1e-12);
  }
  EXPECT_NEAR(reward_stream(r, cfg)[0], -0.4 * 0.5, 1e-12);
}

TEST(ClipLoss, WorkedExamples) {
  const auto p = model(1);
  auto cfg = plain_cfg();
  RolloutBatch b;
  // rho = 1.5 with A = 1: the objective is clipped at 1.2
  b.rollouts.push_back(rollout_at(p, {5, 6}, {}, std::log(1.5)));
  b.rollouts[0].advantages = {1.0};
  EXPECT_NEAR(ppo_clip_loss(p, b, cfg).policy, -1.2, 1e-12);
  // rho = 0.5 with A = -1: the pessimistic term is -0.8
  b.rollouts[0] = rollout_at(p, {5, 6}, {}, std::log(0.5));
  b.rollouts[0].advantages = {-1.0};
  EXPECT_NEAR(ppo_clip_loss(p, b, cfg).policy, 0.8, 1e-12);
  // inside the trust region the ratio is used as is
  b.rollouts[0] = rollout_at(p, {5, 6}, {}, std::log(1.1));
  b.rollouts[0].advantages = {2.0};
  EXPECT_NEAR(ppo_clip_loss(p, b, cfg).policy, -2.2, 1e-12);
}

TEST(ClipLoss, ValueTermIsTokenMeanSquaredError) {
  const auto p = model(2);
  PpoConfig cfg;
  cfg.normalize_advantages = false;
  cfg.value_coef = 0.5;
  RolloutBatch b;
  b.rollouts.push_back(rollout_at(p, {5}, {6, 7}, 0.0));
  b.rollouts[0].returns = {1.0, -2.0, 0.5};
  const auto f = policy::frame(b.rollouts[0].prompt, b.rollouts[0].response, false);
  const auto out = policy::forward_logits(p, std::span<const TokenId>(f.tokens.data(), f.tokens.size() - 1));
  double want = 0.0;
  for (std::size_t t = 0; t < 3; ++t) {
    const double e = out.values[f.target_begin - 1 + t] - b.rollouts[0].returns[t];
    want += 0.5 * e * e / 3.0;
  }
  EXPECT_NEAR(ppo_clip_loss(p, b, cfg).value, want, 1e-12);
}

TEST(PpoGradient, UnitRatioIsVanillaPolicyGradient) {
  auto p = model(4);
  const auto cfg = plain_cfg();
  RolloutBatch b;
  b.rollouts.push_back(rollout_at(p, {5, 7}, {6, 8}, 0.0));
  b.rollouts.push_back(rollout_at(p, {8}, {5}, 0.0));
  b.rollouts[0].advantages.assign(3, 1.5);
  b.rollouts[1].advantages.assign(2, -0.7);
  const auto adv = batch_advantages(b, false);
  const auto g = ppo_gradient(p, b, adv, 0, 2, cfg);
  // -(1/N) sum_i A_i * log pi(y_i | x_i), differentiated numerically
  auto objective = [&] {
    return -(1.5 * policy::sequence_logprob(p, b.rollouts[0].prompt, std::vector<TokenId>{6, 8}) +
             -0.7 * policy::sequence_logprob(p, b.rollouts[1].prompt, std::vector<TokenId>{5})) /
           5.0;
  };
  auto w = p.values();
  double worst = 0.0;
  for (std::size_t c = 0; c < w.size(); c += 5) {
    const double keep = w[c];
    w[c] = keep + 1e-5;
    const double up = objective();
    w[c] = keep - 1e-5;
    const double down = objective();
    w[c] = keep;
    const double num = (up - down) / 2e-5;
    worst = std::max(worst, std::abs(g.grads.flat()[c] - num));
  }
  EXPECT_LT(worst, 1e-8);
}

TEST(PpoGradient, MicroBatchesAddUp) {
  const auto p = model(5);
  PpoConfig cfg;
  cfg.normalize_advantages = false;
  RolloutBatch b;
  b.rollouts.push_back(rollout_at(p, {5}, {6}, 0.1));
  b.rollouts.push_back(rollout_at(p, {6, 7}, {8, 8}, -0.05));
  b.rollouts.push_back(rollout_at(p, {7}, {}, 0.0));
  for (auto& r : b.rollouts) {
    r.advantages.assign(r.response.size(), 0.3);
    r.returns.assign(r.response.size(), 1.0);
  }
  const auto adv = batch_advantages(b, false);
  const auto whole = ppo_gradient(p, b, adv, 0, 3, cfg);
  auto part = ppo_gradient(p, b, adv, 0, 1, cfg);
  const auto rest = ppo_gradient(p, b, adv, 1, 3, cfg);
  part.grads.add(rest.grads);
  EXPECT_NEAR(part.loss.total + rest.loss.total, whole.loss.total, 1e-12);
  EXPECT_NEAR(whole.loss.total, ppo_clip_loss(p, b, cfg).total, 1e-12);
  for (std::size_t i = 0; i < part.grads.flat().size(); ++i) ASSERT_NEAR(part.grads.flat()[i], whole.grads.flat()[i], 1e-13);
}

TEST(PpoSteps, EpochsAndMaxSteps) {
  PpoConfig cfg;
  EXPECT_EQ(ppo_steps(842, cfg), 53u);
  cfg.epochs = 2;
  EXPECT_EQ(ppo_steps(16, cfg), 2u);
  cfg.max_steps = 7;
  EXPECT_EQ(ppo_steps(842, cfg), 7u);
}

TEST(PpoConfig, RejectsBadValues) {
  PpoConfig c;
  c.clip_epsilon = 1.5;
  EXPECT_PF_ERROR(c.validate(), ErrorCode::kInvalidConfig);
  EXPECT_PF_ERROR(PpoConfig::from_json({{"batch_size", "four"}}), ErrorCode::kInvalidConfig);
  const auto back = PpoConfig::from_json(PpoConfig{}.to_json());
  EXPECT_EQ(back.to_json(), PpoConfig{}.to_json());
}

TEST(Rollouts, RequireValueHeadAndPrompts) {
  const auto ref = reference_model();
  const auto v = toy_vocab();
  CountingBundle bundle;
  const std::vector<text::Prompt> prompts = {text::make_prompt(v, "a bad apple")};
  EXPECT_PF_ERROR(collect_rollouts(ref, ref, v, bundle, prompts, PpoConfig{}, Rng(1)),
                  ErrorCode::kValueHeadDisabled);
  const auto pol = make_trainable(ref, PpoConfig{}, Rng(1));
  EXPECT_PF_ERROR(collect_rollouts(pol, ref, v, bundle, std::span<const text::Prompt>{}, PpoConfig{}, Rng(1)),
                  ErrorCode::kEmptyPromptSet);
}

TEST(Rollouts, FreshAdaptersMatchReference) {
  const auto ref = reference_model();
  const auto v = toy_vocab();
  CountingBundle bundle;
  PpoConfig cfg;
  cfg.rollouts_per_prompt = 3;
  cfg.reward.samples_per_prompt = 2;
  const auto pol = make_trainable(ref, cfg, Rng(1));
  const std::vector<text::Prompt> prompts = {text::make_prompt(v, "a bad apple"), text::make_prompt(v, "apple")};
  const auto b = collect_rollouts(pol, ref, v, bundle, prompts, cfg, Rng(4));
  ASSERT_EQ(b.rollouts.size(), 6u);
  for (const auto& r : b.rollouts) {
    ASSERT_EQ(r.logp_old.size(), r.response.size());
    for (std::size_t t = 0; t < r.response.size(); ++t) EXPECT_NEAR(r.logp_old[t], r.logp_ref[t], 1e-12);
    EXPECT_NEAR(r.breakdown.penalty, cfg.reward.beta, 1e-12);
  }
  EXPECT_EQ(b.rollouts[3].prompt_text, "apple");
}

TEST(TrainPpo, DeterministicWithLogPerStep) {
  const auto ref = reference_model();
  CountingBundle bundle;
  PpoConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.batch_size = 2;
  cfg.accumulation = 1;
  cfg.inner_epochs = 2;
  cfg.reward.samples_per_prompt = 2;
  cfg.reward.penalty_form = reward::PenaltyForm::kLogRatio;
  int hooks = 0;
  cfg.checkpoint_every = 1;
  Rng a(11), b(11);
  const auto r1 = train_ppo(ref, ppo_split(), toy_vocab(), bundle, cfg, a,
                            [&](std::size_t, const PolicyParameters&) { ++hooks; });
  const auto r2 = train_ppo(ref, ppo_split(), toy_vocab(), bundle, cfg, b);
  ASSERT_EQ(r1.log.size(), 2u);
  EXPECT_EQ(hooks, 2);
  EXPECT_EQ(r1.policy, r2.policy);
  EXPECT_EQ(r1.log[1].to_json(), r2.log[1].to_json());
  EXPECT_NEAR(r1.log[0].mean_abs_log_ratio, 0.0, 1e-12);
  EXPECT_EQ(r1.policy.role(), policy::Role::kTrainablePolicy);
}

TEST(TrainPpo, Errors) {
  CountingBundle bundle;
  Rng rng(1);
  auto not_ref = reference_model();
  not_ref.set_role(policy::Role::kTrainablePolicy);
  EXPECT_PF_ERROR(train_ppo(not_ref, ppo_split(), toy_vocab(), bundle, PpoConfig{}, rng), ErrorCode::kInvalidConfig);
  EXPECT_PF_ERROR(train_ppo(reference_model(), foundry::DatasetSplits{}, toy_vocab(), bundle, PpoConfig{}, rng),
                  ErrorCode::kEmptyDataset);
}
