// Copyright 2026 The PromptForge Authors
// SPDX-License-Identifier: Apache-2.0

// Word-level tokenization, vocabularies, prompt records and the line-delimited
// pair file format shared by every stage of the pipeline.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace promptforge::text {

using TokenId = std::int32_t;

inline constexpr std::string_view kBosToken = "<bos>";
inline constexpr std::string_view kSepToken = "<sep>";
inline constexpr std::string_view kEosToken = "<eos>";
inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr std::size_t kNumSpecials = 5;

/// Lowercases and splits on whitespace; every ASCII punctuation character is
/// its own token. Special markers can never come out of this function.
std::vector<std::string> tokenize(std::string_view text);

/// The canonical form that an encode/decode round trip reproduces.
std::string normalize(std::string_view text);

class Vocabulary {
 public:
  /// Specials occupy ids 0..4 in the order BOS, SEP, EOS, PAD, UNK; `words`
  /// follow in the given order. Duplicate or special-looking words are rejected.
  static Vocabulary from_words(const std::vector<std::string>& words);

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  std::optional<TokenId> find(std::string_view token) const;
  /// Id of `token`, or UNK when the token is not in the vocabulary.
  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const;

  static constexpr TokenId bos() noexcept { return 0; }
  static constexpr TokenId sep() noexcept { return 1; }
  static constexpr TokenId eos() noexcept { return 2; }
  static constexpr TokenId pad() noexcept { return 3; }
  static constexpr TokenId unk() noexcept { return 4; }
  static constexpr bool is_special(TokenId id) noexcept {
    return id >= 0 && id < static_cast<TokenId>(kNumSpecials);
  }

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

/// Keeps the `max_size - 5` most frequent corpus tokens; ties go to the token
/// seen first. Throws EmptyCorpus / InvalidConfig.
Vocabulary build_vocab(std::span<const std::string> corpus, std::size_t max_size);

std::vector<TokenId> encode(const Vocabulary& vocab, std::string_view text);

/// Space-joins token strings; specials render as nothing. Throws
/// IndexOutOfRange for ids outside the vocabulary.
std::string decode(const Vocabulary& vocab, std::span<const TokenId> tokens);

struct Prompt {
  std::string raw;
  std::vector<TokenId> tokens;

  bool operator==(const Prompt&) const = default;
};

Prompt make_prompt(const Vocabulary& vocab, std::string raw);

enum class Provenance { kLlm, kSynthetic, kManual };

std::string_view to_string(Provenance p);
Provenance provenance_from_string(std::string_view s);

struct PromptPair {
  Prompt toxic;
  Prompt clean;
  Provenance provenance = Provenance::kManual;
  std::optional<std::string> category;

  bool operator==(const PromptPair&) const = default;
};

/// Fills the token fields of both prompts from their raw text.
void tokenize_pairs(const Vocabulary& vocab, std::vector<PromptPair>& pairs);

/// One JSON object per line: toxic, clean, provenance, category. Tokens are
/// not persisted; read pairs carry raw text only.
std::vector<PromptPair> read_pairs(const std::filesystem::path& path);
void write_pairs(const std::filesystem::path& path, std::span<const PromptPair> pairs);

}  // namespace promptforge::text
