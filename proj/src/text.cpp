// Copyright 2026 The PromptForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "promptforge/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "json.hpp"
#include "promptforge/error.hpp"

namespace promptforge::text {
namespace {

constexpr std::string_view kSpecials[kNumSpecials] = {kBosToken, kSepToken, kEosToken,
                                                      kPadToken, kUnkToken};

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      out.push_back(std::move(current));
      current.clear();
    }
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

std::string normalize(std::string_view text) {
  std::string out;
  for (const auto& tok : tokenize(text)) {
    if (!out.empty()) out.push_back(' ');
    out += tok;
  }
  return out;
}

Vocabulary Vocabulary::from_words(const std::vector<std::string>& words) {
  Vocabulary v;
  v.tokens_.reserve(kNumSpecials + words.size());
  for (auto s : kSpecials) v.tokens_.emplace_back(s);
  for (const auto& w : words) {
    auto toks = tokenize(w);
    if (toks.size() != 1 || toks[0] != w) {
      throw Error(ErrorCode::kInvalidConfig, "not a corpus token: '" + w + "'");
    }
    v.tokens_.push_back(w);
  }
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.ids_.emplace(v.tokens_[i], static_cast<TokenId>(i)).second) {
      throw Error(ErrorCode::kInvalidConfig, "duplicate token '" + v.tokens_[i] + "'");
    }
  }
  return v;
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::id(std::string_view token) const { return find(token).value_or(unk()); }

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw Error(ErrorCode::kIndexOutOfRange,
                "token id " + std::to_string(id) + " >= vocabulary size " + std::to_string(size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  for (std::size_t i = kNumSpecials; i < tokens_.size(); ++i) out << tokens_[i] << '\n';
  if (!out) throw Error(ErrorCode::kIoError, "write failed: " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) words.push_back(line);
  }
  return from_words(words);
}

Vocabulary build_vocab(std::span<const std::string> corpus, std::size_t max_size) {
  if (corpus.empty()) throw Error(ErrorCode::kEmptyCorpus, "corpus is empty");
  if (max_size < 8) throw Error(ErrorCode::kInvalidConfig, "max_size must be >= 8");

  struct Stat {
    std::size_t count = 0;
    std::size_t first_seen = 0;
  };
  std::unordered_map<std::string, Stat> stats;
  std::vector<std::string> order;
  for (const auto& text : corpus) {
    for (auto& tok : tokenize(text)) {
      auto [it, inserted] = stats.try_emplace(tok, Stat{0, order.size()});
      if (inserted) order.push_back(tok);
      ++it->second.count;
    }
  }
  std::stable_sort(order.begin(), order.end(), [&](const std::string& a, const std::string& b) {
    return stats[a].count > stats[b].count;
  });
  const std::size_t keep = std::min(order.size(), max_size - kNumSpecials);
  order.resize(keep);
  return Vocabulary::from_words(order);
}

std::vector<TokenId> encode(const Vocabulary& vocab, std::string_view text) {
  std::vector<TokenId> ids;
  for (const auto& tok : tokenize(text)) ids.push_back(vocab.id(tok));
  return ids;
}

std::string decode(const Vocabulary& vocab, std::span<const TokenId> tokens) {
  std::string out;
  for (TokenId id : tokens) {
    const std::string& tok = vocab.token(id);
    if (Vocabulary::is_special(id)) continue;
    if (!out.empty()) out.push_back(' ');
    out += tok;
  }
  return out;
}

Prompt make_prompt(const Vocabulary& vocab, std::string raw) {
  Prompt p;
  p.tokens = encode(vocab, raw);
  p.raw = std::move(raw);
  return p;
}

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::kLlm: return "llm";
    case Provenance::kSynthetic: return "synthetic";
    case Provenance::kManual: return "manual";
  }
  return "manual";
}

Provenance provenance_from_string(std::string_view s) {
  if (s == "llm") return Provenance::kLlm;
  if (s == "synthetic") return Provenance::kSynthetic;
  if (s == "manual") return Provenance::kManual;
  throw Error(ErrorCode::kInvalidConfig, "unknown provenance '" + std::string(s) + "'");
}

void tokenize_pairs(const Vocabulary& vocab, std::vector<PromptPair>& pairs) {
  for (auto& p : pairs) {
    p.toxic.tokens = encode(vocab, p.toxic.raw);
    p.clean.tokens = encode(vocab, p.clean.raw);
  }
}

std::vector<PromptPair> read_pairs(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path.string());
  std::vector<PromptPair> pairs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) {
      continue;
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw MalformedRecord(lineno, e.what());
    }
    try {
      PromptPair p;
      p.toxic.raw = j.at("toxic").get<std::string>();
      p.clean.raw = j.at("clean").get<std::string>();
      p.provenance = provenance_from_string(j.at("provenance").get<std::string>());
      const auto& cat = j.at("category");
      if (!cat.is_null()) p.category = cat.get<std::string>();
      if (p.toxic.raw.empty() || p.clean.raw.empty()) throw MalformedRecord(lineno, "empty prompt");
      pairs.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw MalformedRecord(lineno, e.what());
    } catch (const MalformedRecord&) {
      throw;
    } catch (const Error& e) {
      throw MalformedRecord(lineno, e.what());
    }
  }
  return pairs;
}

void write_pairs(const std::filesystem::path& path, std::span<const PromptPair> pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  for (const auto& p : pairs) {
    if (p.toxic.raw.empty() || p.clean.raw.empty()) {
      throw Error(ErrorCode::kInvalidConfig, "pair with empty prompt");
    }
    nlohmann::ordered_json j;
    j["toxic"] = p.toxic.raw;
    j["clean"] = p.clean.raw;
    j["provenance"] = to_string(p.provenance);
    j["category"] = p.category ? nlohmann::ordered_json(*p.category) : nlohmann::ordered_json(nullptr);
    out << j.dump() << '\n';
  }
  if (!out) throw Error(ErrorCode::kIoError, "write failed: " + path.string());
}

}  // namespace promptforge::text
