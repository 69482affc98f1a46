// Copyright 2026 The PromptForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "promptforge/error.hpp"
#include "promptforge/policy.hpp"
#include "promptforge/rng.hpp"

namespace pf_test {

#define EXPECT_PF_ERROR(stmt, expected_code)                                   \
  do {                                                                         \
    try {                                                                      \
      stmt;                                                                    \
      ADD_FAILURE() << "expected " << promptforge::to_string(expected_code);   \
    } catch (const promptforge::Error& e) {                                    \
      EXPECT_EQ(e.code(), expected_code) << e.what();                          \
    }                                                                          \
  } while (0)

inline promptforge::policy::PolicyConfig tiny_config(std::size_t vocab = 9) {
  promptforge::policy::PolicyConfig c;
  c.vocab_size = vocab;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_layers = 1;
  c.d_ff = 16;
  c.max_seq_len = 24;
  return c;
}

/// Weights large enough that gradients are far from zero.
inline promptforge::policy::PolicyParameters noisy(promptforge::policy::PolicyParameters p,
                                                   std::uint64_t seed, double scale = 0.3) {
  promptforge::Rng rng(seed);
  for (auto& w : p.values()) w += scale * rng.normal();
  return p;
}

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = std::filesystem::temp_directory_path() /
            ("promptforge-unit-" + std::string(info ? info->name() : "x") + "-" +
             std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream(p, std::ios::binary) << content;
}

}  // namespace pf_test
