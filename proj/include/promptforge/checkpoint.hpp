// Copyright 2026 The PromptForge Authors
// SPDX-License-Identifier: Apache-2.0

// Versioned binary container: 8-byte magic, u32 format version, u64 header
// length, a JSON header (metadata plus the tensor table), then every tensor
// as little-endian float64 in table order.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "promptforge/policy.hpp"
#include "promptforge/text.hpp"

namespace promptforge {

struct NamedTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;
};

struct TensorArchive {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const NamedTensor& get(const std::string& name) const;

  void write(const std::filesystem::path& path) const;
  static TensorArchive read(const std::filesystem::path& path);
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  text::Vocabulary vocab;
  policy::PolicyParameters params;
};

TensorArchive to_archive(const text::Vocabulary& vocab, const policy::PolicyParameters& params);
Checkpoint from_archive(const TensorArchive& archive);

void save_checkpoint(const std::filesystem::path& path, const text::Vocabulary& vocab,
                     const policy::PolicyParameters& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace promptforge
