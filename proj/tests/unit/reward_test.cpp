// Copyright 2026 The PromptForge Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <limits>

#include "helpers.hpp"
#include "promptforge/reward.hpp"

using namespace promptforge;
using namespace promptforge::reward;

namespace {

// Scores every sample with fixed numbers and counts generator calls.
class FixedBundle : public ScorerBundle {
 public:
  FixedBundle(std::vector<double> tox, std::vector<double> sim) : tox_(std::move(tox)), sim_(std::move(sim)) {}

  GeneratedSample generate(std::string_view prompt, std::size_t draw_index, Rng&) const override {
    ++calls;
    return GeneratedSample{{}, std::string(prompt), draw_index};
  }
  double toxicity(const GeneratedSample& s) const override { return tox_[s.draw_index % tox_.size()]; }
  double alignment(std::string_view, const GeneratedSample& s) const override {
    return sim_[s.draw_index % sim_.size()];
  }

  mutable std::atomic<int> calls{0};

 private:
  std::vector<double> tox_;
  std::vector<double> sim_;
};

}  // namespace

TEST(ToxicScore, Endpoints) {
  const std::vector<double> zero = {0.0};
  const std::vector<double> one = {1.0, 1.0, 1.0};
  const std::vector<double> mixed = {0.0, 1.0, 0.25, 0.75};
  EXPECT_EQ(toxic_score(zero), 5.0);
  EXPECT_EQ(toxic_score(one), 0.0);
  EXPECT_NEAR(toxic_score(mixed), 2.5, 1e-12);
  EXPECT_PF_ERROR(toxic_score(std::vector<double>{}), ErrorCode::kEmptySampleSet);
}

TEST(AlignmentScore, CapIsOneSided) {
  EXPECT_NEAR(alignment_score(std::vector<double>{0.5}), 0.31, 1e-12);
  EXPECT_NEAR(alignment_score(std::vector<double>{0.31}), 0.31, 1e-12);
  EXPECT_NEAR(alignment_score(std::vector<double>{0.1}), 0.1, 1e-12);
  EXPECT_NEAR(alignment_score(std::vector<double>{-0.9, 0.9}), (-0.9 + 0.31) / 2.0, 1e-12);
  EXPECT_PF_ERROR(alignment_score(std::vector<double>{}), ErrorCode::kEmptySampleSet);
}

TEST(Penalty, Forms) {
  EXPECT_NEAR(policy_penalty(-2.0, -2.0, 0.02, PenaltyForm::kRatio), 0.02, 1e-12);
  EXPECT_EQ(policy_penalty(-2.0, -2.0, 0.02, PenaltyForm::kLogRatio), 0.0);
  EXPECT_NEAR(policy_penalty(-1.0, -2.0, 0.5, PenaltyForm::kRatio), 0.5 * std::exp(1.0), 1e-12);
  EXPECT_NEAR(policy_penalty(-1.0, -2.0, 0.5, PenaltyForm::kLogRatio), 0.5, 1e-12);
  EXPECT_EQ(policy_penalty(-1.0, -9.0, 0.0, PenaltyForm::kRatio), 0.0);
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_PF_ERROR(policy_penalty(-inf, -2.0, 0.1, PenaltyForm::kRatio), ErrorCode::kNonFiniteInput);
  EXPECT_PF_ERROR(policy_penalty(-1.0, std::nan(""), 0.1, PenaltyForm::kLogRatio), ErrorCode::kNonFiniteInput);
}

TEST(RewardConfig, JsonRoundTripAndValidation) {
  RewardConfig c;
  EXPECT_EQ(c.penalty_form, PenaltyForm::kRatio);
  EXPECT_DOUBLE_EQ(c.beta, 0.02);
  EXPECT_EQ(c.samples_per_prompt, 10u);
  c.beta = 0.3;
  c.penalty_form = PenaltyForm::kLogRatio;
  const auto back = RewardConfig::from_json(c.to_json());
  EXPECT_EQ(back.beta, 0.3);
  EXPECT_EQ(back.penalty_form, PenaltyForm::kLogRatio);
  EXPECT_PF_ERROR(penalty_form_from_string("kl"), ErrorCode::kInvalidConfig);
  c.beta = -1.0;
  EXPECT_PF_ERROR(c.validate(), ErrorCode::kInvalidConfig);
}

TEST(ScoreRewrite, CombinesTermsOverSharedSamples) {
  FixedBundle bundle({0.2, 1.4, -0.5}, {0.5, 0.1, 0.3});
  RewardConfig cfg;
  cfg.samples_per_prompt = 3;
  cfg.beta = 0.1;
  cfg.penalty_form = PenaltyForm::kLogRatio;
  Rng rng(1);
  const auto b = score_rewrite("x", "y", bundle, cfg, -1.0, -3.0, rng);
  EXPECT_EQ(bundle.calls.load(), 3);
  // toxicity is clamped into [0, 1] before scoring
  EXPECT_EQ(b.confidences, (std::vector<double>{0.2, 1.0, 0.0}));
  EXPECT_NEAR(b.s_toxic, ((5 - 1.0) + 0.0 + 5.0) / 3.0, 1e-12);
  EXPECT_NEAR(b.s_alt, (0.31 + 0.1 + 0.3) / 3.0, 1e-12);
  EXPECT_NEAR(b.penalty, 0.2, 1e-12);
  EXPECT_NEAR(b.total, b.s_toxic + b.s_alt - b.penalty, 1e-12);
  cfg.samples_per_prompt = 0;
  EXPECT_PF_ERROR(score_rewrite("x", "y", bundle, cfg, 0, 0, rng), ErrorCode::kZeroSamples);
}

TEST(TotalReward, PenaltyUsesSequenceLogprobs) {
  Rng init(2);
  const auto policy = pf_test::noisy(policy::init_params(pf_test::tiny_config(), init), 3);
  const auto reference = pf_test::noisy(policy, 4, 0.05);
  const auto vocab = text::Vocabulary::from_words({"a", "b", "c", "d"});
  const auto x = text::make_prompt(vocab, "a b c");
  const auto y = text::make_prompt(vocab, "d a");
  FixedBundle bundle({0.0}, {1.0});
  RewardConfig cfg;
  cfg.beta = 0.7;
  Rng rng(5);
  const auto same = total_reward(x, y, bundle, policy, policy, cfg, rng);
  EXPECT_NEAR(same.penalty, 0.7, 1e-12);
  EXPECT_NEAR(same.total, 5.0 + 0.31 - 0.7, 1e-12);
  const auto diff = total_reward(x, y, bundle, policy, reference, cfg, rng);
  const double lp = policy::sequence_logprob(policy, x.tokens, y.tokens);
  const double lr = policy::sequence_logprob(reference, x.tokens, y.tokens);
  EXPECT_NEAR(diff.penalty, 0.7 * std::exp(lp - lr), 1e-12);
}
