// Copyright 2026 The PromptForge Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <set>

#include "helpers.hpp"
#include "promptforge/text.hpp"

using namespace promptforge;
using namespace promptforge::text;

TEST(Tokenize, LowercasesAndSplitsPunctuation) {
  EXPECT_EQ(tokenize("A Bad, apple!"), (std::vector<std::string>{"a", "bad", ",", "apple", "!"}));
  EXPECT_EQ(tokenize("  \t\n"), std::vector<std::string>{});
  EXPECT_EQ(tokenize("<bos>"), (std::vector<std::string>{"<", "bos", ">"}));
}

TEST(Tokenize, NormalizeIsIdempotent) {
  for (const char* s : {"A  bad apple.", "Photo of the FIRST robot, visible", ""}) {
    const auto once = normalize(s);
    EXPECT_EQ(normalize(once), once);
  }
}

TEST(Vocabulary, SmallCorpusGetsWordsPlusSpecials) {
  const std::vector<std::string> corpus = {"a bad apple", "a good apple"};
  const auto v = build_vocab(corpus, 100);
  EXPECT_EQ(v.size(), kNumSpecials + 4);
  const std::set<std::string> words(v.tokens().begin() + kNumSpecials, v.tokens().end());
  EXPECT_EQ(words, (std::set<std::string>{"a", "bad", "good", "apple"}));
  EXPECT_EQ(v.token(Vocabulary::bos()), kBosToken);
  EXPECT_EQ(v.token(Vocabulary::unk()), kUnkToken);
}

TEST(Vocabulary, FrequencyThenFirstSeen) {
  const std::vector<std::string> corpus = {"z y y x x x w w w w"};
  const auto v = build_vocab(corpus, kNumSpecials + 3);
  ASSERT_EQ(v.size(), kNumSpecials + 3);
  EXPECT_EQ(v.token(kNumSpecials), "w");
  EXPECT_EQ(v.token(kNumSpecials + 1), "x");
  EXPECT_EQ(v.token(kNumSpecials + 2), "y");
  const std::vector<std::string> tie = {"q p"};
  const auto w = build_vocab(tie, 100);
  EXPECT_EQ(w.token(kNumSpecials), "q");
}

TEST(Vocabulary, Errors) {
  const std::vector<std::string> none;
  EXPECT_PF_ERROR(build_vocab(none, 100), ErrorCode::kEmptyCorpus);
  EXPECT_PF_ERROR(Vocabulary::from_words({"apple", "apple"}), ErrorCode::kInvalidConfig);
  EXPECT_PF_ERROR(Vocabulary::from_words({"<eos>"}), ErrorCode::kInvalidConfig);
  const auto v = Vocabulary::from_words({"apple"});
  const std::vector<TokenId> bad = {99};
  EXPECT_PF_ERROR(decode(v, bad), ErrorCode::kIndexOutOfRange);
}

TEST(Vocabulary, EncodeDecodeRoundTrip) {
  const std::vector<std::string> corpus = {"a bad apple, on the white table.", "the rose"};
  const auto v = build_vocab(corpus, 100);
  for (const auto& s : corpus) EXPECT_EQ(decode(v, encode(v, s)), normalize(s));
  const auto ids = encode(v, "a purple apple");
  EXPECT_EQ(ids[1], Vocabulary::unk());
}

TEST(Vocabulary, SaveLoad) {
  pf_test::TempDir dir;
  const std::vector<std::string> corpus = {"a bad apple", "red rose"};
  const auto v = build_vocab(corpus, 100);
  v.save(dir / "vocab.txt");
  EXPECT_EQ(Vocabulary::load(dir / "vocab.txt"), v);
}

TEST(PairFile, RoundTrip) {
  pf_test::TempDir dir;
  std::vector<PromptPair> pairs(2);
  pairs[0].toxic.raw = "a bad apple";
  pairs[0].clean.raw = "a normal apple";
  pairs[0].provenance = Provenance::kSynthetic;
  pairs[0].category = "harassment";
  pairs[1].toxic.raw = "nude \"photo\"";
  pairs[1].clean.raw = "dressed photo";
  pairs[1].provenance = Provenance::kLlm;
  write_pairs(dir / "p.jsonl", pairs);
  EXPECT_EQ(read_pairs(dir / "p.jsonl"), pairs);
}

TEST(PairFile, TruncatedLineReportsItsNumber) {
  pf_test::TempDir dir;
  pf_test::write_file(dir / "p.jsonl",
                      "{\"toxic\":\"a bad apple\",\"clean\":\"a normal apple\",\"provenance\":\"manual\",\"category\":null}\n"
                      "{\"toxic\":\"a bad\n");
  try {
    read_pairs(dir / "p.jsonl");
    FAIL() << "expected MalformedRecord";
  } catch (const MalformedRecord& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_PF_ERROR(read_pairs(dir / "missing.jsonl"), ErrorCode::kIoError);
}

TEST(PairFile, TokenizePairs) {
  const auto v = Vocabulary::from_words({"bad", "apple", "normal"});
  std::vector<PromptPair> pairs(1);
  pairs[0].toxic.raw = "bad apple";
  pairs[0].clean.raw = "normal apple";
  tokenize_pairs(v, pairs);
  EXPECT_EQ(pairs[0].toxic.tokens, (std::vector<TokenId>{5, 6}));
  EXPECT_EQ(pairs[0].clean.tokens, (std::vector<TokenId>{7, 6}));
}
