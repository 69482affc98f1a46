// Copyright 2026 The PromptForge Authors
// SPDX-License-Identifier: Apache-2.0

// The rewriting policy: a small causal decoder over framed sequences
// BOS x SEP x' EOS, with optional low-rank adapters on the attention
// projections and an optional scalar value head. Everything is float64 and
// differentiated by a hand-written reverse pass.

#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "promptforge/rng.hpp"
#include "promptforge/text.hpp"

namespace promptforge::policy {

using text::TokenId;

struct PolicyConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_layers = 2;
  std::size_t d_ff = 256;
  std::size_t max_seq_len = 64;
  bool value_head = true;
  /// 0 means no adapters. Adapters are usually attached later with
  /// attach_adapters() on top of a trained base.
  std::size_t adapter_rank = 0;
  /// Subset of {"q", "k", "v", "o"}.
  std::vector<std::string> adapter_targets = {"q", "v"};
  double init_scale = 0.02;

  /// Throws InvalidConfig.
  void validate() const;
  nlohmann::json to_json() const;
  static PolicyConfig from_json(const nlohmann::json& j);

  bool operator==(const PolicyConfig&) const = default;
};

enum class Role { kSftReference, kTrainablePolicy };

std::string_view to_string(Role role);
Role role_from_string(std::string_view s);

enum class TensorKind { kBase, kAdapter, kValueHead };

struct TensorSpec {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
  TensorKind kind = TensorKind::kBase;
};

/// All weights live in one flat buffer; `layout()` names the slices in
/// declaration order.
class PolicyParameters {
 public:
  PolicyParameters() = default;
  PolicyParameters(PolicyConfig config, Role role);

  const PolicyConfig& config() const noexcept { return config_; }
  Role role() const noexcept { return role_; }
  void set_role(Role role) noexcept { role_ = role; }

  const std::vector<TensorSpec>& layout() const noexcept { return layout_; }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  const TensorSpec& spec(std::string_view name) const;
  bool contains(std::string_view name) const;
  std::span<double> tensor(std::string_view name);
  std::span<const double> tensor(std::string_view name) const;

  bool has_adapters() const noexcept { return config_.adapter_rank > 0; }
  bool has_value_head() const noexcept { return config_.value_head; }
  /// Adapters and value head when adapters are attached, otherwise everything.
  bool is_trainable(const TensorSpec& spec) const noexcept;

  bool all_finite() const;

  bool operator==(const PolicyParameters& other) const {
    return config_ == other.config_ && role_ == other.role_ && data_ == other.data_;
  }

 private:
  PolicyConfig config_;
  Role role_ = Role::kTrainablePolicy;
  std::vector<TensorSpec> layout_;
  std::vector<double> data_;
};

/// Gaussian weights with std `init_scale`, unit layer-norm gains, zero biases,
/// zero adapter B factors and a zero value head. Deterministic under `rng`.
PolicyParameters init_params(const PolicyConfig& config, Rng& rng);

/// Copy of `base` with rank-`rank` adapters on `targets`. A is Gaussian with
/// std 1/sqrt(d_model); B is exactly zero, so the adapted model equals the base.
PolicyParameters attach_adapters(const PolicyParameters& base, std::size_t rank,
                                 const std::vector<std::string>& targets, Rng& rng);

/// Copy of `base` with a zero-initialized value head (no-op if present).
PolicyParameters with_value_head(const PolicyParameters& base);

struct ForwardOutput {
  std::size_t length = 0;
  std::size_t vocab = 0;
  std::vector<double> logits;  // length x vocab, row-major
  std::vector<double> values;  // length, empty without a value head

  std::span<const double> row(std::size_t t) const {
    return std::span<const double>(logits).subspan(t * vocab, vocab);
  }
};

/// Throws SequenceTooLong when tokens exceed max_seq_len.
ForwardOutput forward_logits(const PolicyParameters& params, std::span<const TokenId> tokens);

/// Per-position values. Throws ValueHeadDisabled.
std::vector<double> value_estimate(const PolicyParameters& params, std::span<const TokenId> tokens);

/// log softmax(row)[index], computed stably.
double log_softmax_at(std::span<const double> row, std::size_t index);
std::vector<double> softmax(std::span<const double> row);

/// BOS x SEP x' [EOS]. Tokens at positions >= target_begin are predicted
/// targets; the logit row for target t is row t - 1.
struct FramedSequence {
  std::vector<TokenId> tokens;
  std::size_t target_begin = 0;
};

FramedSequence frame(std::span<const TokenId> x, std::span<const TokenId> x_prime, bool terminate);

/// log p(x' EOS | BOS x SEP). Always <= 0. Throws SequenceTooLong.
double sequence_logprob(const PolicyParameters& params, std::span<const TokenId> x,
                        std::span<const TokenId> x_prime);

/// Like sequence_logprob but without the terminating EOS; the mass of a
/// truncated continuation.
double prefix_logprob(const PolicyParameters& params, std::span<const TokenId> x,
                      std::span<const TokenId> x_prime);

/// Log probabilities of each token of `response` (which may end in EOS)
/// given BOS x SEP and the preceding response tokens.
std::vector<double> response_logprobs(const PolicyParameters& params, std::span<const TokenId> x,
                                       std::span<const TokenId> response);

struct DecodeConfig {
  std::size_t max_new_tokens = 32;
  /// 0 selects greedy argmax decoding.
  double temperature = 1.0;
  std::optional<std::size_t> top_k;
  bool stop_at_eos = true;

  void validate() const;
  nlohmann::json to_json() const;
  static DecodeConfig from_json(const nlohmann::json& j);
};

struct Continuation {
  /// Generated tokens, excluding a terminating EOS.
  std::vector<TokenId> tokens;
  /// Untempered model log probability of every generated token, including
  /// the terminating EOS when present.
  std::vector<double> logprobs;
  bool terminated = false;

  /// tokens followed by EOS when terminated.
  std::vector<TokenId> response() const;
};

/// Autoregressive sampling from BOS x SEP. Generation is also cut when the
/// framed sequence reaches max_seq_len. Throws SequenceTooLong when the
/// prefix alone does not fit.
Continuation sample_continuation(const PolicyParameters& params, std::span<const TokenId> x,
                                 const DecodeConfig& decode, Rng& rng);

/// Gradient of a loss w.r.t. the trainable tensors of a PolicyParameters.
class GradientSet {
 public:
  GradientSet() = default;
  explicit GradientSet(const PolicyParameters& params);

  bool contains(std::string_view name) const;
  /// Throws InvalidConfig when `name` is not trainable.
  std::span<const double> tensor(std::string_view name) const;
  std::vector<std::string> names() const;

  /// Full-size buffer aligned with PolicyParameters::values(); entries of
  /// non-trainable tensors are always zero.
  std::span<const double> flat() const noexcept { return data_; }
  std::span<double> flat_mut() noexcept { return data_; }
  const std::vector<bool>& trainable() const noexcept { return trainable_; }
  const std::vector<TensorSpec>& layout() const noexcept { return layout_; }

  void add(const GradientSet& other, double scale = 1.0);
  void scale(double factor);
  /// Zeroes the entries of non-trainable tensors.
  void mask();
  bool all_finite() const;

 private:
  std::vector<TensorSpec> layout_;
  std::vector<bool> trainable_;
  std::vector<double> data_;
};

/// Gradient of the loss w.r.t. the forward outputs of one sequence; callers
/// accumulate into it.
struct OutputGradient {
  std::vector<double> dlogits;
  std::vector<double> dvalues;
};

/// Loss contribution of sequence `index` given its forward output. Must
/// return the scalar and add d(loss)/d(outputs) into `grad`.
using SequenceLoss =
    std::function<double(std::size_t index, const ForwardOutput& out, OutputGradient& grad)>;

struct LossAndGradient {
  double loss = 0.0;
  GradientSet grads;
};

/// Total loss is the sum of per-sequence contributions. Sequences are
/// differentiated independently (optionally in parallel) and reduced in index
/// order, so the result does not depend on the thread count. Throws
/// NonFiniteLoss.
LossAndGradient grad_loss(const PolicyParameters& params,
                          std::span<const std::vector<TokenId>> batch, const SequenceLoss& loss);

}  // namespace promptforge::policy
