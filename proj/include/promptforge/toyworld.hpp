// Copyright 2026 The PromptForge Authors
// SPDX-License-Identifier: Apache-2.0

// Seedable stand-in for the text-to-image model and every image scorer.
//
// Each known word t has a semantic vector s_t in R^d. A prompt "renders" to
// normalize(sum_t s_t + eps) with eps ~ N(0, sigma^2 I). Toxicity lives along
// the unit direction u: toxic words carry a positive loading on u and their
// safe synonyms share the same component orthogonal to u with zero loading.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "promptforge/reward.hpp"
#include "promptforge/rng.hpp"

namespace promptforge::world {

using reward::GeneratedSample;

struct LexiconEntry {
  std::string token;
  std::vector<double> vector;
  /// Component of `vector` along the toxic direction.
  double loading = 0.0;
  /// Safe replacement for toxic words.
  std::optional<std::string> synonym;
  std::optional<std::string> category;
};

class ToyWorld {
 public:
  std::string version = "world-v1";
  std::uint64_t seed = 7;
  std::size_t dimension = 8;
  std::vector<double> toxic_direction;
  std::vector<LexiconEntry> lexicon;
  double tox_steepness = 6.0;
  double tox_bias = 0.35;
  double noise_sigma = 0.05;
  std::vector<double> flag_direction;
  double flag_threshold = 0.6;
  /// d x d row-major, used by the evaluation-side similarity.
  std::vector<double> eval_projection;
  /// Render direction for prompts without any known word.
  std::vector<double> blank_direction;

  /// Rebuilds the word index; call after mutating `lexicon`.
  void reindex();
  /// Throws InvalidConfig when an invariant is violated.
  void validate() const;

  const LexiconEntry* find(std::string_view token) const;
  bool has_synonym(std::string_view token) const;
  std::vector<const LexiconEntry*> toxic_entries() const;
  std::vector<const LexiconEntry*> neutral_entries() const;

  nlohmann::ordered_json to_json() const;
  static ToyWorld from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static ToyWorld load(const std::filesystem::path& path);

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

/// The reference fixture: seed 7, 40 words, 6 synonym pairs.
ToyWorld make_world_v1();

/// Throws EmptyPrompt for an empty word list.
GeneratedSample generate_image(const ToyWorld& world, std::span<const std::string> words,
                               Rng& rng, std::size_t draw_index = 0);
GeneratedSample generate_blank(const ToyWorld& world, Rng& rng, std::size_t draw_index = 0);

/// sigmoid(k (e.u - b))
double tox_confidence(const ToyWorld& world, const GeneratedSample& sample);
/// Cosine between the prompt's bag-of-vectors and the sample. Throws EmptyPrompt.
double align_similarity(const ToyWorld& world, std::span<const std::string> x,
                        const GeneratedSample& sample);
/// As align_similarity, after mapping both vectors through the eval projection.
double eval_similarity(const ToyWorld& world, std::span<const std::string> x,
                       const GeneratedSample& sample);
/// e.u2 > threshold
bool second_flag(const ToyWorld& world, const GeneratedSample& sample);

/// Every toxic word replaced by its synonym.
std::vector<std::string> full_substitution(const ToyWorld& world, std::span<const std::string> x);

struct OracleResult {
  std::vector<std::string> rewrite;
  double expected_objective = 0.0;
  /// Estimates for every candidate in enumeration order (bit i of the index
  /// set = i-th substitutable position replaced).
  std::vector<double> candidate_objectives;
};

/// Expected S_toxic + S_alt of rendering `rewrite` against `original`, over
/// n_mc common-random-number draws (draw j always uses rng.fork(j)).
double expected_objective(const ToyWorld& world, std::span<const std::string> original,
                          std::span<const std::string> rewrite, std::size_t n_mc, const Rng& rng,
                          const reward::RewardConfig& cfg = {});

/// Enumerates all 2^m synonym-substitution subsets of x and returns the best.
/// Throws TooManyCandidates when x has > 12 words or > 6 substitutable ones.
OracleResult oracle_best_rewrite(const ToyWorld& world, std::span<const std::string> x,
                                 std::size_t n_mc, const Rng& rng,
                                 const reward::RewardConfig& cfg = {});

/// ScorerBundle backed by a ToyWorld: toxicity = tox_confidence, alignment =
/// align_similarity. Empty rewrites render the blank canvas.
class ToyWorldBundle : public reward::ScorerBundle {
 public:
  explicit ToyWorldBundle(const ToyWorld& world) : world_(world) {}

  GeneratedSample generate(std::string_view prompt, std::size_t draw_index,
                           Rng& rng) const override;
  double toxicity(const GeneratedSample& sample) const override;
  double alignment(std::string_view original, const GeneratedSample& sample) const override;

 private:
  const ToyWorld& world_;
};

}  // namespace promptforge::world
