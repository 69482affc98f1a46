// Copyright 2026 The PromptForge Authors
// SPDX-License-Identifier: Apache-2.0

// Run configuration: one JSON document mirroring every stage's settings,
// with dotted key=value overrides applied on top.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>

#include "json.hpp"
#include "promptforge/eval.hpp"
#include "promptforge/pair_foundry.hpp"
#include "promptforge/policy.hpp"
#include "promptforge/ppo.hpp"
#include "promptforge/reward.hpp"
#include "promptforge/sft.hpp"
#include "promptforge/toyworld.hpp"

namespace promptforge::config {

struct Paths {
  std::filesystem::path data_dir = "data";
  std::filesystem::path checkpoint_dir = "checkpoints";
  std::filesystem::path report_dir = "reports";
  /// Empty selects the built-in world-v1.
  std::filesystem::path world;
};

struct PairsConfig {
  std::string source = "synthetic";
  std::size_t count = 1200;
  double miss_rate = 0.0;
  /// Toxic prompts, one per line, for the llm source.
  std::filesystem::path input;
};

struct RunConfig {
  std::uint64_t seed = 0;
  Paths paths;
  std::size_t vocab_max_size = 4096;
  PairsConfig pairs;
  foundry::SplitCounts split{600, 200, 100, 0};
  policy::PolicyConfig policy;
  sft::SftConfig sft;
  ppo::PpoConfig ppo;
  reward::RewardConfig reward;
  eval::EvalConfig eval;
  foundry::EndpointConfig endpoint;

  /// Stage seeds are substreams of `seed`; the per-stage seed fields are
  /// overwritten accordingly.
  void derive_seeds();
  nlohmann::ordered_json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
};

/// Defaults, then the file (if any), then the overrides. Unknown keys are
/// rejected. Override values are parsed as JSON, falling back to a string.
/// Throws IoError, InvalidConfig.
RunConfig load_run_config(const std::optional<std::filesystem::path>& file,
                          std::span<const std::string> overrides);

void apply_override(nlohmann::json& doc, const std::string& assignment);

world::ToyWorld load_world(const RunConfig& cfg);

}  // namespace promptforge::config
