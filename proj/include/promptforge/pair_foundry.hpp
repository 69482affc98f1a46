// Copyright 2026 The PromptForge Authors
// SPDX-License-Identifier: Apache-2.0

// Building the toxic -> clean pair dataset: the few-shot rewrite instruction,
// a chat-completion client, response parsing, synthetic pairs drawn from a
// ToyWorld, and the SFT / PPO / eval / template split.

#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "promptforge/rng.hpp"
#include "promptforge/text.hpp"
#include "promptforge/toyworld.hpp"

namespace promptforge::foundry {

using text::Prompt;
using text::PromptPair;

struct ChatMessage {
  std::string role;  // "system" or "user"
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

/// The system prompt and the few-shot user prompt; `toxic_batch` becomes the
/// hint string, one prompt per line. Throws EmptyBatch.
std::vector<ChatMessage> render_instruction(std::span<const Prompt> toxic_batch);
std::vector<ChatMessage> render_instruction(std::span<const std::string> toxic_batch);

struct EndpointConfig {
  std::string base_url = "https://api.openai.com";
  std::string path = "/v1/chat/completions";
  std::string model = "gpt-3.5-turbo";
  std::string api_key_env = "PROMPTFORGE_API_KEY";
  double timeout_seconds = 60.0;
  int max_retries = 3;
  double temperature = 1.0;
  /// First retry delay; doubles on every further attempt.
  double backoff_seconds = 1.0;
  std::size_t max_in_flight = 4;
  std::size_t prompts_per_request = 20;

  void validate() const;
  nlohmann::json to_json() const;
  static EndpointConfig from_json(const nlohmann::json& j);
};

struct HttpResponse {
  int status = 0;  // 0 for connection-level failures
  std::string body;
  std::string error;
};

/// POSTs `body` to base_url + path. Swappable so tests can serve fixtures.
using HttpTransport = std::function<HttpResponse(
    const EndpointConfig& cfg, const std::map<std::string, std::string>& headers,
    const std::string& body)>;

/// cpp-httplib transport (TLS for https URLs).
HttpTransport default_transport();

nlohmann::json chat_request_body(const EndpointConfig& cfg, std::span<const ChatMessage> messages);

/// choices[0].message.content. Throws MalformedResponse.
std::string extract_content(std::string_view response_body);

class ChatClient {
 public:
  explicit ChatClient(EndpointConfig cfg, HttpTransport transport = default_transport(),
                      std::function<void(std::chrono::duration<double>)> sleep = {});

  /// Blocks while max_in_flight requests are already running. Retries 429,
  /// 5xx and connection failures with exponential backoff. Throws
  /// MissingApiKey, TransportError, RateLimited, MalformedResponse.
  std::string complete(std::span<const ChatMessage> messages);

  const EndpointConfig& config() const noexcept { return cfg_; }
  std::size_t attempts() const;

 private:
  EndpointConfig cfg_;
  HttpTransport transport_;
  std::function<void(std::chrono::duration<double>)> sleep_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::size_t in_flight_ = 0;
  std::size_t attempts_ = 0;
};

std::string request_rewrites(const EndpointConfig& cfg, std::span<const ChatMessage> messages);

struct ParseResult {
  std::vector<PromptPair> pairs;
  std::size_t rejected = 0;
};

/// Total: never throws. Each "Original Sentence:" opens a segment whose
/// original side runs to "Modified Sentence:" and whose modified side runs to
/// the end of the line or the next "Original Sentence:".
ParseResult parse_pairs(std::string_view raw);

/// Rewrites `prompts` through the client in batches of prompts_per_request.
ParseResult make_llm_pairs(ChatClient& client, std::span<const std::string> prompts);

/// Synthetic prompts over the world lexicon: 3-7 neutral words plus 1-3
/// distinct toxic words. With miss_rate > 0 each toxic word independently
/// survives into the clean side with that probability, imitating an
/// imperfect rewriter. Throws NoSynonyms.
std::vector<PromptPair> synth_pairs(const world::ToyWorld& world, std::size_t n, Rng& rng,
                                    double miss_rate = 0.0);

struct CategorizedPrompt {
  Prompt prompt;
  std::optional<std::string> category;

  bool operator==(const CategorizedPrompt&) const = default;
};

struct SplitCounts {
  std::size_t sft = 0;
  std::size_t ppo = 0;
  std::size_t eval = 0;
  std::size_t templates = 0;
};

struct DatasetSplits {
  std::vector<PromptPair> sft;
  std::vector<CategorizedPrompt> ppo;
  std::vector<CategorizedPrompt> eval;
  std::vector<CategorizedPrompt> templates;
};

/// Drops repeated toxic prompts (normalized text, first occurrence wins),
/// shuffles with `seed`, then assigns contiguous blocks in the order sft,
/// ppo, eval, template. Throws InsufficientPairs.
DatasetSplits split_dataset(std::span<const PromptPair> pairs, const SplitCounts& counts,
                            std::uint64_t seed);

/// One {"prompt", "category"} object per line.
void write_prompts(const std::filesystem::path& path, std::span<const CategorizedPrompt> prompts);
std::vector<CategorizedPrompt> read_prompts(const std::filesystem::path& path);

void write_splits(const std::filesystem::path& dir, const DatasetSplits& splits);
DatasetSplits read_splits(const std::filesystem::path& dir);

}  // namespace promptforge::foundry
