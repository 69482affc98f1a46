// Copyright 2026 The PromptForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "promptforge/pair_foundry.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include "promptforge/error.hpp"

namespace promptforge::foundry {
namespace {

constexpr std::string_view kSystemContent =
    "Now you are asked to play the role of Granny Wolf who was very happy to make toxic prompts "
    "not toxic and make slight changes to the words in the sentences that may produce harmful "
    "content so that the content they produce becomes appropriate.";

constexpr std::string_view kUserContent =
    "I will give you some sentences (prompts) describing scenarios with negative and harmful "
    "information. Changing only the words that will have a negative impact and leaving the other "
    "words untouched leaves the generated picture mostly intact. Here are some examples: \n"
    "Original Sentence: A bad apple on the white table Modified Sentence: A normal apple on the "
    "white table.\n"
    " Original Sentence: veins on an arm forming a rose Modified Sentence: Branches on an arm "
    "forming a rose. \n"
    "Original Sentence: the four horsewomen of the apocalypse, painting by tom of finland, gaston "
    "bussiere, craig mullins, j. c. leyendecker  Modified Sentence: The four horsewomen in dresses "
    "of the art world, paintings by Tom of Finland, Gaston Bussiere, Craig Mullins, J. C. "
    "Leyendecker.\n"
    " Original Sentence: photo of the first russian robot policeman guarding a vodka store, "
    "babushkas visible in the background Modified Sentence: Photo of the first Russian automated "
    "unarmed policeman guarding a vodka store, babushkas visible in the background.\n"
    " Original Sentence: the night of despair, doompunk, dark emotional portrait, nineteenth "
    "century painting masterpiece Modified Sentence: The evening of happiness, doompunk, emotional "
    "portrait, nineteenth-century artwork masterpiece. \n"
    "All sentence pairs should be formatted like this: Original Sentence: xx Modified Sentence: "
    "xx. Here are some original prompts that need to be modified: ";

constexpr std::string_view kOriginal = "original sentence:";
constexpr std::string_view kModified = "modified sentence:";

std::string_view trim(std::string_view s) {
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::size_t> find_all(std::string_view hay, std::string_view needle) {
  std::vector<std::size_t> out;
  for (auto pos = hay.find(needle); pos != std::string_view::npos;
       pos = hay.find(needle, pos + needle.size())) {
    out.push_back(pos);
  }
  return out;
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool blank(std::string_view s) { return trim(s).empty(); }

}  // namespace

std::vector<ChatMessage> render_instruction(std::span<const std::string> toxic_batch) {
  if (toxic_batch.empty()) throw Error(ErrorCode::kEmptyBatch, "no prompts to rewrite");
  std::string hint;
  for (std::size_t i = 0; i < toxic_batch.size(); ++i) {
    if (i) hint.push_back('\n');
    hint += toxic_batch[i];
  }
  return {ChatMessage{"system", std::string(kSystemContent)},
          ChatMessage{"user", std::string(kUserContent) + hint}};
}

std::vector<ChatMessage> render_instruction(std::span<const Prompt> toxic_batch) {
  std::vector<std::string> raw;
  raw.reserve(toxic_batch.size());
  for (const auto& p : toxic_batch) raw.push_back(p.raw);
  return render_instruction(std::span<const std::string>(raw));
}

void EndpointConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::kInvalidConfig, "endpoint: " + m); };
  if (max_retries < 0) fail("max_retries must be >= 0");
  if (!(timeout_seconds > 0.0)) fail("timeout_seconds must be > 0");
  if (!(backoff_seconds >= 0.0)) fail("backoff_seconds must be >= 0");
  if (!(temperature >= 0.0)) fail("temperature must be >= 0");
  if (max_in_flight == 0) fail("max_in_flight must be >= 1");
  if (prompts_per_request == 0) fail("prompts_per_request must be >= 1");
  if (base_url.empty()) fail("base_url is empty");
}

nlohmann::json EndpointConfig::to_json() const {
  return {{"base_url", base_url},
          {"path", path},
          {"model", model},
          {"api_key_env", api_key_env},
          {"timeout_seconds", timeout_seconds},
          {"max_retries", max_retries},
          {"temperature", temperature},
          {"backoff_seconds", backoff_seconds},
          {"max_in_flight", max_in_flight},
          {"prompts_per_request", prompts_per_request}};
}

EndpointConfig EndpointConfig::from_json(const nlohmann::json& j) {
  EndpointConfig c;
  try {
    c.base_url = j.value("base_url", c.base_url);
    c.path = j.value("path", c.path);
    c.model = j.value("model", c.model);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.temperature = j.value("temperature", c.temperature);
    c.backoff_seconds = j.value("backoff_seconds", c.backoff_seconds);
    c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
    c.prompts_per_request = j.value("prompts_per_request", c.prompts_per_request);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("endpoint: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json chat_request_body(const EndpointConfig& cfg, std::span<const ChatMessage> messages) {
  nlohmann::json msgs = nlohmann::json::array();
  for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  return {{"model", cfg.model}, {"messages", std::move(msgs)}, {"temperature", cfg.temperature}};
}

std::string extract_content(std::string_view response_body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(response_body);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kMalformedResponse, e.what());
  }
  if (!j.is_object() || !j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) {
    throw Error(ErrorCode::kMalformedResponse, "no choices");
  }
  const auto& choice = j["choices"][0];
  if (!choice.is_object() || !choice.contains("message") || !choice["message"].is_object()) {
    throw Error(ErrorCode::kMalformedResponse, "first choice has no message");
  }
  const auto& msg = choice["message"];
  if (!msg.contains("content") || !msg["content"].is_string()) {
    throw Error(ErrorCode::kMalformedResponse, "first choice has no assistant content");
  }
  return msg["content"].get<std::string>();
}

ParseResult parse_pairs(std::string_view raw) {
  ParseResult result;
  const std::string lower = lowercase(raw);
  const auto originals = find_all(lower, kOriginal);
  const auto modifieds = find_all(lower, kModified);

  if (originals.empty()) {
    if (!modifieds.empty()) {
      result.rejected = modifieds.size();
    } else if (!blank(raw)) {
      result.rejected = 1;
    }
    return result;
  }
  // Modified markers ahead of the first original are orphans.
  for (auto m : modifieds) {
    if (m < originals.front()) ++result.rejected;
  }
  for (std::size_t i = 0; i < originals.size(); ++i) {
    const std::size_t begin = originals[i] + kOriginal.size();
    const std::size_t end = i + 1 < originals.size() ? originals[i + 1] : raw.size();
    std::vector<std::size_t> mods;
    for (auto m : modifieds) {
      if (m >= begin && m < end) mods.push_back(m);
    }
    if (mods.size() != 1) {
      ++result.rejected;
      continue;
    }
    const std::size_t m = mods.front();
    const auto original = trim(raw.substr(begin, m - begin));
    const std::size_t mbegin = m + kModified.size();
    std::size_t mend = raw.find('\n', mbegin);
    if (mend == std::string_view::npos || mend > end) mend = end;
    const auto modified = trim(raw.substr(mbegin, mend - mbegin));
    if (original.empty() || modified.empty()) {
      ++result.rejected;
      continue;
    }
    PromptPair p;
    p.toxic.raw = std::string(original);
    p.clean.raw = std::string(modified);
    p.provenance = text::Provenance::kLlm;
    result.pairs.push_back(std::move(p));
  }
  return result;
}

ParseResult make_llm_pairs(ChatClient& client, std::span<const std::string> prompts) {
  ParseResult all;
  const std::size_t per = client.config().prompts_per_request;
  for (std::size_t i = 0; i < prompts.size(); i += per) {
    auto batch = prompts.subspan(i, std::min(per, prompts.size() - i));
    auto messages = render_instruction(batch);
    auto parsed = parse_pairs(client.complete(messages));
    all.rejected += parsed.rejected;
    for (auto& p : parsed.pairs) all.pairs.push_back(std::move(p));
  }
  return all;
}

std::vector<PromptPair> synth_pairs(const world::ToyWorld& world, std::size_t n, Rng& rng,
                                    double miss_rate) {
  const auto toxic = world.toxic_entries();
  const auto neutral = world.neutral_entries();
  if (toxic.empty()) throw Error(ErrorCode::kNoSynonyms, "world has no synonym pairs");
  if (neutral.empty()) throw Error(ErrorCode::kNoSynonyms, "world has no neutral words");
  if (!(miss_rate >= 0.0 && miss_rate <= 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "miss_rate must lie in [0, 1]");
  }
  std::vector<PromptPair> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t n_neutral = 3 + rng.below(5);
    const std::size_t n_toxic = std::min<std::size_t>(1 + rng.below(3), toxic.size());
    std::vector<const world::LexiconEntry*> pool = toxic;
    rng.shuffle(pool);
    std::vector<const world::LexiconEntry*> words(pool.begin(), pool.begin() + n_toxic);
    for (std::size_t k = 0; k < n_neutral; ++k) words.push_back(neutral[rng.below(neutral.size())]);
    rng.shuffle(words);

    std::string toxic_text;
    std::string clean_text;
    std::optional<std::string> category;
    for (const auto* e : words) {
      if (!toxic_text.empty()) {
        toxic_text.push_back(' ');
        clean_text.push_back(' ');
      }
      toxic_text += e->token;
      if (e->synonym) {
        if (!category) category = e->category;
        const bool missed = rng.uniform() < miss_rate;
        clean_text += missed ? e->token : *e->synonym;
      } else {
        clean_text += e->token;
      }
    }
    PromptPair p;
    p.toxic.raw = std::move(toxic_text);
    p.clean.raw = std::move(clean_text);
    p.provenance = text::Provenance::kSynthetic;
    p.category = std::move(category);
    out.push_back(std::move(p));
  }
  return out;
}

DatasetSplits split_dataset(std::span<const PromptPair> pairs, const SplitCounts& counts,
                            std::uint64_t seed) {
  std::vector<PromptPair> unique;
  std::set<std::string> seen;
  for (const auto& p : pairs) {
    if (seen.insert(text::normalize(p.toxic.raw)).second) unique.push_back(p);
  }
  const std::size_t need = counts.sft + counts.ppo + counts.eval + counts.templates;
  if (need > unique.size()) {
    throw Error(ErrorCode::kInsufficientPairs,
                "requested " + std::to_string(need) + " pairs but only " +
                    std::to_string(unique.size()) + " distinct toxic prompts are available");
  }
  Rng rng(seed);
  rng.shuffle(unique);
  DatasetSplits s;
  std::size_t at = 0;
  auto take_prompts = [&](std::size_t k, std::vector<CategorizedPrompt>& dst) {
    for (std::size_t i = 0; i < k; ++i, ++at) dst.push_back({unique[at].toxic, unique[at].category});
  };
  for (; at < counts.sft; ++at) s.sft.push_back(unique[at]);
  take_prompts(counts.ppo, s.ppo);
  take_prompts(counts.eval, s.eval);
  take_prompts(counts.templates, s.templates);
  return s;
}

void write_prompts(const std::filesystem::path& path, std::span<const CategorizedPrompt> prompts) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  for (const auto& p : prompts) {
    nlohmann::ordered_json j;
    j["prompt"] = p.prompt.raw;
    j["category"] = p.category ? nlohmann::ordered_json(*p.category) : nlohmann::ordered_json();
    out << j.dump() << '\n';
  }
  if (!out) throw Error(ErrorCode::kIoError, "write failed: " + path.string());
}

std::vector<CategorizedPrompt> read_prompts(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path.string());
  std::vector<CategorizedPrompt> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      CategorizedPrompt p;
      p.prompt.raw = j.at("prompt").get<std::string>();
      if (p.prompt.raw.empty()) throw MalformedRecord(lineno, "empty prompt");
      if (j.contains("category") && !j["category"].is_null()) {
        p.category = j["category"].get<std::string>();
      }
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw MalformedRecord(lineno, e.what());
    }
  }
  return out;
}

void write_splits(const std::filesystem::path& dir, const DatasetSplits& splits) {
  std::filesystem::create_directories(dir);
  text::write_pairs(dir / "sft.jsonl", splits.sft);
  write_prompts(dir / "ppo.jsonl", splits.ppo);
  write_prompts(dir / "eval.jsonl", splits.eval);
  write_prompts(dir / "template.jsonl", splits.templates);
}

DatasetSplits read_splits(const std::filesystem::path& dir) {
  DatasetSplits s;
  s.sft = text::read_pairs(dir / "sft.jsonl");
  s.ppo = read_prompts(dir / "ppo.jsonl");
  s.eval = read_prompts(dir / "eval.jsonl");
  if (std::filesystem::exists(dir / "template.jsonl")) s.templates = read_prompts(dir / "template.jsonl");
  return s;
}

}  // namespace promptforge::foundry
