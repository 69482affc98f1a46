// Copyright 2026 The PromptForge Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "helpers.hpp"
#include "promptforge/parallel.hpp"
#include "promptforge/policy.hpp"

using namespace promptforge;
using namespace promptforge::policy;

namespace {

const std::vector<TokenId> kPrompt = {5, 6, 7};

// Loss mixing next-token log-likelihood and a value regression so that every
// output of the forward pass carries gradient.
struct MixedLoss {
  std::vector<std::vector<TokenId>> batch;
  std::vector<double> value_targets;

  double operator()(const PolicyParameters& p) const {
    double total = 0.0;
    for (const auto& seq : batch) {
      const auto out = forward_logits(p, seq);
      for (std::size_t t = 0; t + 1 < seq.size(); ++t) total -= log_softmax_at(out.row(t), seq[t + 1]);
      for (std::size_t t = 0; t < out.values.size(); ++t) {
        const double e = out.values[t] - value_targets[t];
        total += 0.5 * e * e;
      }
    }
    return total;
  }

  LossAndGradient grad(const PolicyParameters& p) const {
    const std::size_t V = p.config().vocab_size;
    return grad_loss(p, batch, [&](std::size_t i, const ForwardOutput& out, OutputGradient& g) {
      const auto& seq = batch[i];
      double l = 0.0;
      for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
        const auto row = out.row(t);
        l -= log_softmax_at(row, seq[t + 1]);
        const auto prob = softmax(row);
        for (std::size_t c = 0; c < V; ++c) g.dlogits[t * V + c] += prob[c];
        g.dlogits[t * V + seq[t + 1]] -= 1.0;
      }
      for (std::size_t t = 0; t < out.values.size(); ++t) {
        const double e = out.values[t] - value_targets[t];
        l += 0.5 * e * e;
        g.dvalues[t] += e;
      }
      return l;
    });
  }
};

MixedLoss make_loss(std::size_t vocab) {
  MixedLoss m;
  Rng rng(21);
  for (int i = 0; i < 3; ++i) {
    std::vector<TokenId> s;
    for (int t = 0; t < 5 + i; ++t) s.push_back(static_cast<TokenId>(rng.below(vocab)));
    m.batch.push_back(s);
  }
  for (int t = 0; t < 16; ++t) m.value_targets.push_back(rng.normal());
  return m;
}

double max_rel_error(PolicyParameters p, const MixedLoss& loss, std::size_t stride) {
  const auto analytic = loss.grad(p);
  double worst = 0.0;
  auto w = p.values();
  for (const auto& s : p.layout()) {
    if (!p.is_trainable(s)) continue;
    for (std::size_t k = 0; k < s.size; k += stride) {
      const std::size_t c = s.offset + k;
      const double keep = w[c];
      w[c] = keep + 1e-5;
      const double up = loss(p);
      w[c] = keep - 1e-5;
      const double down = loss(p);
      w[c] = keep;
      const double num = (up - down) / 2e-5;
      const double a = analytic.grads.flat()[c];
      worst = std::max(worst, std::abs(a - num) / std::max({std::abs(a), std::abs(num), 1e-6}));
    }
  }
  return worst;
}

}  // namespace

TEST(PolicyConfig, Validation) {
  auto c = pf_test::tiny_config();
  EXPECT_NO_THROW(c.validate());
  c.vocab_size = 3;
  EXPECT_PF_ERROR(c.validate(), ErrorCode::kInvalidConfig);
  c = pf_test::tiny_config();
  c.n_heads = 3;
  EXPECT_PF_ERROR(c.validate(), ErrorCode::kInvalidConfig);
  c = pf_test::tiny_config();
  c.adapter_rank = 2;
  c.adapter_targets = {"x"};
  EXPECT_PF_ERROR(c.validate(), ErrorCode::kInvalidConfig);
  EXPECT_EQ(PolicyConfig::from_json(pf_test::tiny_config().to_json()), pf_test::tiny_config());
}

TEST(Gradient, FullModelMatchesFiniteDifferences) {
  Rng rng(1);
  const auto p = pf_test::noisy(init_params(pf_test::tiny_config(), rng), 2);
  EXPECT_LT(max_rel_error(p, make_loss(9), 3), 1e-5);
}

TEST(Gradient, AdaptersAndValueHeadMatchFiniteDifferences) {
  Rng rng(3);
  const auto base = init_params(pf_test::tiny_config(), rng);
  const auto p = pf_test::noisy(attach_adapters(base, 2, {"q", "k", "v", "o"}, rng), 4);
  EXPECT_LT(max_rel_error(p, make_loss(9), 1), 1e-5);
}

TEST(Gradient, OnlyTrainableTensorsReceiveGradient) {
  Rng rng(5);
  const auto base = init_params(pf_test::tiny_config(), rng);
  const auto p = pf_test::noisy(attach_adapters(base, 2, {"q", "v"}, rng), 6);
  const auto g = make_loss(9).grad(p);
  for (const auto& s : p.layout()) {
    const bool trainable = s.kind != TensorKind::kBase;
    EXPECT_EQ(g.grads.contains(s.name), trainable) << s.name;
    if (trainable) continue;
    for (std::size_t k = 0; k < s.size; ++k) ASSERT_EQ(g.grads.flat()[s.offset + k], 0.0) << s.name;
  }
  EXPECT_PF_ERROR(g.grads.tensor("wte"), ErrorCode::kInvalidConfig);
}

TEST(Gradient, IndependentOfThreadCount) {
  Rng rng(7);
  const auto p = pf_test::noisy(init_params(pf_test::tiny_config(), rng), 8);
  const auto loss = make_loss(9);
  set_max_threads(1);
  const auto one = loss.grad(p);
  set_max_threads(4);
  const auto four = loss.grad(p);
  set_max_threads(1);
  EXPECT_EQ(one.loss, four.loss);
  ASSERT_EQ(one.grads.flat().size(), four.grads.flat().size());
  for (std::size_t i = 0; i < one.grads.flat().size(); ++i) ASSERT_EQ(one.grads.flat()[i], four.grads.flat()[i]);
}

TEST(Adapters, ZeroInitializedAdaptersLeaveOutputsUnchanged) {
  Rng rng(9);
  const auto base = pf_test::noisy(init_params(pf_test::tiny_config(), rng), 10);
  const auto adapted = attach_adapters(base, 4, {"q", "k", "v", "o"}, rng);
  const std::vector<TokenId> seq = {0, 5, 6, 1, 7, 8};
  const auto a = forward_logits(base, seq);
  const auto b = forward_logits(adapted, seq);
  for (std::size_t i = 0; i < a.logits.size(); ++i) EXPECT_NEAR(a.logits[i], b.logits[i], 1e-12);
  for (const auto& s : adapted.layout()) {
    if (!s.name.ends_with("lora_b")) continue;
    for (double v : adapted.tensor(s.name)) EXPECT_EQ(v, 0.0);
  }
}

TEST(ValueHead, DisabledHeadIsAnError) {
  auto c = pf_test::tiny_config();
  c.value_head = false;
  Rng rng(1);
  const auto p = init_params(c, rng);
  const std::vector<TokenId> seq = {0, 5, 1};
  EXPECT_PF_ERROR(value_estimate(p, seq), ErrorCode::kValueHeadDisabled);
  const auto with = with_value_head(p);
  EXPECT_EQ(value_estimate(with, seq).size(), seq.size());
  for (double v : value_estimate(with, seq)) EXPECT_EQ(v, 0.0);
}

TEST(Probability, ContinuationsOfTwoWordVocabularySumToOne) {
  auto c = pf_test::tiny_config(text::kNumSpecials + 2);
  c.init_scale = 0.8;
  Rng rng(11);
  const auto p = init_params(c, rng);
  const std::vector<TokenId> x = {5, 6, 5};
  const std::size_t horizon = 2;
  double mass = 0.0;
  std::function<void(std::vector<TokenId>&)> walk = [&](std::vector<TokenId>& pre) {
    if (pre.size() == horizon) {
      mass += std::exp(prefix_logprob(p, x, pre));
      return;
    }
    mass += std::exp(sequence_logprob(p, x, pre));
    for (TokenId t = 0; t < static_cast<TokenId>(c.vocab_size); ++t) {
      if (t == text::Vocabulary::eos()) continue;
      pre.push_back(t);
      walk(pre);
      pre.pop_back();
    }
  };
  std::vector<TokenId> pre;
  walk(pre);
  EXPECT_NEAR(mass, 1.0, 1e-9);
}

TEST(Probability, LogprobsAreNonPositiveAndConsistent) {
  Rng rng(12);
  const auto p = pf_test::noisy(init_params(pf_test::tiny_config(), rng), 13);
  const std::vector<TokenId> y = {6, 8, 5};
  const double full = sequence_logprob(p, kPrompt, y);
  EXPECT_LE(full, 0.0);
  std::vector<TokenId> with_eos = y;
  with_eos.push_back(text::Vocabulary::eos());
  double sum = 0.0;
  for (double lp : response_logprobs(p, kPrompt, with_eos)) sum += lp;
  EXPECT_NEAR(sum, full, 1e-12);
  EXPECT_LE(full, prefix_logprob(p, kPrompt, y));
}

TEST(Sampling, FirstTokenFrequenciesMatchSoftmax) {
  auto c = pf_test::tiny_config();
  c.init_scale = 0.5;
  Rng init(14);
  const auto p = init_params(c, init);
  const auto f = frame(kPrompt, {}, false);
  const auto out = forward_logits(p, f.tokens);
  const auto probs = softmax(out.row(f.tokens.size() - 1));
  DecodeConfig d;
  d.max_new_tokens = 1;
  Rng rng(15);
  const int n = 20000;
  std::vector<double> counts(c.vocab_size, 0.0);
  for (int i = 0; i < n; ++i) {
    const auto cont = sample_continuation(p, kPrompt, d, rng);
    const TokenId t = cont.terminated ? text::Vocabulary::eos() : cont.tokens.at(0);
    counts[static_cast<std::size_t>(t)] += 1.0;
  }
  for (std::size_t k = 0; k < c.vocab_size; ++k) {
    const double sd = std::sqrt(probs[k] * (1 - probs[k]) / n);
    EXPECT_NEAR(counts[k] / n, probs[k], 5 * sd + 1e-4) << "token " << k;
  }
}

TEST(Sampling, ReportedLogprobsMatchScoring) {
  Rng init(16);
  const auto p = pf_test::noisy(init_params(pf_test::tiny_config(), init), 17);
  DecodeConfig d;
  d.max_new_tokens = 6;
  Rng rng(18);
  for (int i = 0; i < 20; ++i) {
    const auto cont = sample_continuation(p, kPrompt, d, rng);
    const auto lp = response_logprobs(p, kPrompt, cont.response());
    ASSERT_EQ(lp.size(), cont.logprobs.size());
    for (std::size_t t = 0; t < lp.size(); ++t) EXPECT_NEAR(lp[t], cont.logprobs[t], 1e-12);
  }
}

TEST(Sampling, GreedyIsDeterministicArgmax) {
  Rng init(19);
  const auto p = pf_test::noisy(init_params(pf_test::tiny_config(), init), 20);
  DecodeConfig d;
  d.temperature = 0.0;
  d.max_new_tokens = 4;
  Rng a(1), b(2);
  const auto x = sample_continuation(p, kPrompt, d, a);
  const auto y = sample_continuation(p, kPrompt, d, b);
  EXPECT_EQ(x.tokens, y.tokens);
  std::vector<TokenId> seq = frame(kPrompt, {}, false).tokens;
  const auto out = forward_logits(p, seq);
  const auto row = out.row(seq.size() - 1);
  const auto best = static_cast<TokenId>(std::max_element(row.begin(), row.end()) - row.begin());
  if (best == text::Vocabulary::eos()) {
    EXPECT_TRUE(x.terminated && x.tokens.empty());
  } else {
    EXPECT_EQ(x.tokens.at(0), best);
  }
}

TEST(Sampling, Limits) {
  Rng init(21);
  const auto p = init_params(pf_test::tiny_config(), init);
  DecodeConfig d;
  Rng rng(1);
  const std::vector<TokenId> long_prompt(30, 5);
  EXPECT_PF_ERROR(sample_continuation(p, long_prompt, d, rng), ErrorCode::kSequenceTooLong);
  EXPECT_PF_ERROR(sequence_logprob(p, long_prompt, kPrompt), ErrorCode::kSequenceTooLong);
  d.temperature = -1.0;
  EXPECT_PF_ERROR(sample_continuation(p, kPrompt, d, rng), ErrorCode::kInvalidConfig);
  d = DecodeConfig{};
  d.max_new_tokens = 100;
  const auto cont = sample_continuation(p, kPrompt, d, rng);
  EXPECT_LE(kPrompt.size() + 2 + cont.tokens.size(), p.config().max_seq_len);
}

TEST(Frame, Layout) {
  const std::vector<TokenId> y = {8, 9};
  const auto f = frame(kPrompt, y, true);
  EXPECT_EQ(f.tokens, (std::vector<TokenId>{0, 5, 6, 7, 1, 8, 9, 2}));
  EXPECT_EQ(f.target_begin, 5u);
  EXPECT_EQ(frame(kPrompt, y, false).tokens.back(), 9);
}
