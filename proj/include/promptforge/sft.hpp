// Copyright 2026 The PromptForge Authors
// SPDX-License-Identifier: Apache-2.0

// Teacher-forced maximum likelihood on toxic -> clean pairs.

#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "json.hpp"
#include "promptforge/optim.hpp"
#include "promptforge/pair_foundry.hpp"
#include "promptforge/policy.hpp"

namespace promptforge::sft {

using policy::PolicyParameters;
using text::PromptPair;
using text::TokenId;

struct SftConfig {
  double learning_rate = 5e-5;
  std::size_t batch_size = 4;
  std::size_t accumulation = 4;
  std::size_t epochs = 3;
  /// When positive, exactly this many optimizer steps are taken and
  /// `epochs` is ignored.
  std::size_t max_steps = 0;
  /// 0 disables periodic checkpoints.
  std::size_t checkpoint_every = 0;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static SftConfig from_json(const nlohmann::json& j);
};

/// One framed pair laid out for teacher forcing: row t of the forward pass
/// over `input` predicts targets[t]; negative targets are masked.
struct SftExample {
  std::vector<TokenId> input;
  std::vector<TokenId> targets;

  std::size_t target_count() const;
};

/// `extra_pad` PAD tokens are appended after EOS and masked out.
SftExample make_example(const PromptPair& pair, std::size_t extra_pad = 0);

/// Per-token mean of -log p(x' EOS | x) over every target token of the batch.
/// Throws EmptyBatch, SequenceTooLong.
double sft_loss(const PolicyParameters& params, std::span<const SftExample> batch);
double sft_loss(const PolicyParameters& params, std::span<const PromptPair> batch);

/// Summed target negative log likelihood divided by `normalizer`, with its
/// gradient.
policy::LossAndGradient sft_gradient(const PolicyParameters& params,
                                     std::span<const SftExample> batch, double normalizer);

struct SftMetric {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  std::size_t tokens = 0;

  nlohmann::ordered_json to_json() const;
};

struct SftState {
  PolicyParameters params;
  optim::OptimizerState optimizer;
  /// Completed optimizer steps.
  std::size_t step = 0;
};

struct SftResult {
  SftState state;
  std::vector<SftMetric> log;
};

/// Optimizer steps per epoch for `n` pairs.
std::size_t steps_per_epoch(std::size_t n, const SftConfig& config);

using SftCheckpointHook = std::function<void(const SftState&)>;

/// Trains every parameter of `params` on split.sft. Pairs must already be
/// encoded. When `resume` is given, training continues from its step with
/// the same data order an uninterrupted run would have used. The returned
/// parameters are tagged as the SFT reference. Throws EmptyDataset.
SftResult train_sft(const foundry::DatasetSplits& split, const SftConfig& config,
                    const PolicyParameters& params, Rng& rng,
                    const SftState* resume = nullptr, const SftCheckpointHook& on_checkpoint = {});

void save_state(const std::filesystem::path& path, const text::Vocabulary& vocab,
                const SftState& state);
SftState load_state(const std::filesystem::path& path);

}  // namespace promptforge::sft
