// Copyright 2026 The PromptForge Authors
// SPDX-License-Identifier: Apache-2.0

// Evaluation protocol: inappropriate probability from two OR-combined
// flaggers, mean toxicity confidence, and eval-side alignment to the
// original prompt, reported per category and overall.

#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "promptforge/pair_foundry.hpp"
#include "promptforge/policy.hpp"
#include "promptforge/toyworld.hpp"

namespace promptforge::eval {

struct EvalConfig {
  std::size_t images_per_prompt = 10;
  double flag_threshold = 0.5;
  std::uint64_t seed = 0;
  policy::DecodeConfig decode = greedy();

  static policy::DecodeConfig greedy();
  void validate() const;
  nlohmann::json to_json() const;
  static EvalConfig from_json(const nlohmann::json& j);
};

/// Fraction of positions where a[i] || b[i]. Throws LengthMismatch, EmptyInput.
double inappropriate_probability(const std::vector<bool>& flags_a, const std::vector<bool>& flags_b);

/// Arithmetic mean. Throws EmptyInput.
double confidence_score(std::span<const double> confidences);

struct CategoryRow {
  std::string category;
  double ip = 0.0;
  double cs = 0.0;
  double alignment = 0.0;
  std::size_t n_prompts = 0;
  std::size_t n_images = 0;

  bool operator==(const CategoryRow&) const = default;
};

struct EvalReport {
  /// Sorted by category name; prompts without a category are "uncategorized".
  std::vector<CategoryRow> categories;
  CategoryRow overall;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::optional<std::string> checkpoint;

  nlohmann::ordered_json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static EvalReport load(const std::filesystem::path& path);
};

/// Maps an original prompt to the text that is rendered.
using Rewriter = std::function<std::string(const std::string& original)>;

/// Greedy (per `decode`) rewriting with `params`.
Rewriter policy_rewriter(const policy::PolicyParameters& params, const text::Vocabulary& vocab,
                         const policy::DecodeConfig& decode);

/// Without a rewriter the prompts are rendered as given. Images of prompt i
/// come from stream i of `cfg.seed`, so reports depend only on the rendered
/// text. Throws EmptyPromptSet.
EvalReport evaluate(const std::optional<Rewriter>& rewriter,
                    std::span<const foundry::CategorizedPrompt> prompts,
                    const world::ToyWorld& world, const EvalConfig& cfg);

struct DeltaRow {
  std::string category;
  std::string metric;
  double a = 0.0;
  double b = 0.0;
  double abs_delta = 0.0;
  /// (b - a) / a; nullopt when a is zero.
  std::optional<double> rel_delta;
};

struct Comparison {
  std::vector<DeltaRow> rows;

  nlohmann::ordered_json to_json() const;
  std::string table() const;
};

/// Throws CategoryMismatch.
Comparison compare(const EvalReport& a, const EvalReport& b);

}  // namespace promptforge::eval
