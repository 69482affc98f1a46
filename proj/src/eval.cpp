// Copyright 2026 The PromptForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "promptforge/eval.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "promptforge/error.hpp"
#include "promptforge/parallel.hpp"

namespace promptforge::eval {

policy::DecodeConfig EvalConfig::greedy() {
  policy::DecodeConfig d;
  d.temperature = 0.0;
  return d;
}

void EvalConfig::validate() const {
  if (images_per_prompt == 0) {
    throw Error(ErrorCode::kInvalidConfig, "eval: images_per_prompt must be >= 1");
  }
  decode.validate();
}

nlohmann::json EvalConfig::to_json() const {
  return {{"images_per_prompt", images_per_prompt},
          {"flag_threshold", flag_threshold},
          {"seed", seed},
          {"decode", decode.to_json()}};
}

EvalConfig EvalConfig::from_json(const nlohmann::json& j) {
  EvalConfig c;
  try {
    c.images_per_prompt = j.value("images_per_prompt", c.images_per_prompt);
    c.flag_threshold = j.value("flag_threshold", c.flag_threshold);
    c.seed = j.value("seed", c.seed);
    if (j.contains("decode")) c.decode = policy::DecodeConfig::from_json(j["decode"]);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("eval: ") + e.what());
  }
  c.validate();
  return c;
}

double inappropriate_probability(const std::vector<bool>& flags_a, const std::vector<bool>& flags_b) {
  if (flags_a.size() != flags_b.size()) {
    throw Error(ErrorCode::kLengthMismatch, std::to_string(flags_a.size()) + " vs " +
                                                std::to_string(flags_b.size()) + " flags");
  }
  if (flags_a.empty()) throw Error(ErrorCode::kEmptyInput, "no flags");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < flags_a.size(); ++i) hits += (flags_a[i] || flags_b[i]) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(flags_a.size());
}

double confidence_score(std::span<const double> confidences) {
  if (confidences.empty()) throw Error(ErrorCode::kEmptyInput, "no confidences");
  double s = 0.0;
  for (double c : confidences) s += c;
  return s / static_cast<double>(confidences.size());
}

namespace {

nlohmann::ordered_json row_json(const CategoryRow& r) {
  nlohmann::ordered_json j;
  j["category"] = r.category;
  j["ip"] = r.ip;
  j["cs"] = r.cs;
  j["alignment"] = r.alignment;
  j["n_prompts"] = r.n_prompts;
  j["n_images"] = r.n_images;
  return j;
}

CategoryRow row_from_json(const nlohmann::json& j) {
  CategoryRow r;
  r.category = j.at("category").get<std::string>();
  r.ip = j.at("ip").get<double>();
  r.cs = j.at("cs").get<double>();
  r.alignment = j.at("alignment").get<double>();
  r.n_prompts = j.at("n_prompts").get<std::size_t>();
  r.n_images = j.at("n_images").get<std::size_t>();
  return r;
}

struct PromptResult {
  std::vector<bool> flag_a;
  std::vector<bool> flag_b;
  std::vector<double> confidences;
  std::vector<double> similarities;
};

struct Accumulator {
  std::vector<bool> a;
  std::vector<bool> b;
  std::vector<double> conf;
  double sim_sum = 0.0;
  std::size_t prompts = 0;

  void add(const PromptResult& r) {
    a.insert(a.end(), r.flag_a.begin(), r.flag_a.end());
    b.insert(b.end(), r.flag_b.begin(), r.flag_b.end());
    conf.insert(conf.end(), r.confidences.begin(), r.confidences.end());
    for (double s : r.similarities) sim_sum += s;
    ++prompts;
  }

  CategoryRow row(std::string name) const {
    CategoryRow r;
    r.category = std::move(name);
    r.ip = inappropriate_probability(a, b);
    r.cs = confidence_score(conf);
    r.alignment = sim_sum / static_cast<double>(conf.size());
    r.n_prompts = prompts;
    r.n_images = conf.size();
    return r;
  }
};

}  // namespace

nlohmann::ordered_json EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "promptforge-eval-report";
  j["seed"] = seed;
  j["checkpoint"] = checkpoint ? nlohmann::ordered_json(*checkpoint) : nlohmann::ordered_json();
  j["config"] = nlohmann::ordered_json::parse(config.dump());
  j["categories"] = nlohmann::ordered_json::array();
  for (const auto& r : categories) j["categories"].push_back(row_json(r));
  j["overall"] = row_json(overall);
  return j;
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    r.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("checkpoint") && !j["checkpoint"].is_null()) {
      r.checkpoint = j["checkpoint"].get<std::string>();
    }
    r.config = j.value("config", nlohmann::json::object());
    for (const auto& c : j.at("categories")) r.categories.push_back(row_from_json(c));
    r.overall = row_from_json(j.at("overall"));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("eval report: ") + e.what());
  }
}

void EvalReport::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << to_json().dump(2) << '\n';
  if (!out) throw Error(ErrorCode::kIoError, "write failed: " + path.string());
}

EvalReport EvalReport::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kInvalidConfig, path.string() + ": " + e.what());
  }
}

Rewriter policy_rewriter(const policy::PolicyParameters& params, const text::Vocabulary& vocab,
                         const policy::DecodeConfig& decode) {
  return [&params, &vocab, decode](const std::string& original) {
    const auto x = text::encode(vocab, original);
    Rng rng(0);
    auto cont = policy::sample_continuation(params, x, decode, rng);
    return text::decode(vocab, cont.tokens);
  };
}

EvalReport evaluate(const std::optional<Rewriter>& rewriter,
                    std::span<const foundry::CategorizedPrompt> prompts,
                    const world::ToyWorld& world, const EvalConfig& cfg) {
  cfg.validate();
  if (prompts.empty()) throw Error(ErrorCode::kEmptyPromptSet, "no evaluation prompts");
  const Rng root(cfg.seed);
  std::vector<PromptResult> results(prompts.size());
  parallel_for(prompts.size(), [&](std::size_t i) {
    const auto& original = prompts[i].prompt.raw;
    const auto original_words = text::tokenize(original);
    const std::string rendered = rewriter ? (*rewriter)(original) : original;
    const auto words = text::tokenize(rendered);
    Rng rng = root.fork(i);
    auto& r = results[i];
    for (std::size_t k = 0; k < cfg.images_per_prompt; ++k) {
      const auto sample = words.empty() ? world::generate_blank(world, rng, k)
                                        : world::generate_image(world, words, rng, k);
      const double c = world::tox_confidence(world, sample);
      r.confidences.push_back(c);
      r.flag_a.push_back(c > cfg.flag_threshold);
      r.flag_b.push_back(world::second_flag(world, sample));
      r.similarities.push_back(world::eval_similarity(world, original_words, sample));
    }
  });

  std::map<std::string, Accumulator> by_category;
  Accumulator all;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    by_category[prompts[i].category.value_or("uncategorized")].add(results[i]);
    all.add(results[i]);
  }
  EvalReport report;
  for (const auto& [name, acc] : by_category) report.categories.push_back(acc.row(name));
  report.overall = all.row("overall");
  report.config = cfg.to_json();
  report.seed = cfg.seed;
  return report;
}

nlohmann::ordered_json Comparison::to_json() const {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& r : this->rows) {
    nlohmann::ordered_json j;
    j["category"] = r.category;
    j["metric"] = r.metric;
    j["a"] = r.a;
    j["b"] = r.b;
    j["abs_delta"] = r.abs_delta;
    j["rel_delta"] = r.rel_delta ? nlohmann::ordered_json(*r.rel_delta) : nlohmann::ordered_json();
    rows.push_back(std::move(j));
  }
  return rows;
}

std::string Comparison::table() const {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-16s %-10s %10s %10s %10s %9s\n", "category", "metric", "a", "b",
                "delta", "rel");
  out << line;
  for (const auto& r : rows) {
    char rel[32];
    if (r.rel_delta) {
      std::snprintf(rel, sizeof(rel), "%+.1f%%", *r.rel_delta * 100.0);
    } else {
      std::snprintf(rel, sizeof(rel), "n/a");
    }
    std::snprintf(line, sizeof(line), "%-16s %-10s %10.4f %10.4f %+10.4f %9s\n", r.category.c_str(),
                  r.metric.c_str(), r.a, r.b, r.abs_delta, rel);
    out << line;
  }
  return out.str();
}

Comparison compare(const EvalReport& a, const EvalReport& b) {
  auto names = [](const EvalReport& r) {
    std::vector<std::string> n;
    for (const auto& c : r.categories) n.push_back(c.category);
    return n;
  };
  if (names(a) != names(b)) throw Error(ErrorCode::kCategoryMismatch, "reports cover different categories");
  Comparison cmp;
  auto add = [&](const CategoryRow& ra, const CategoryRow& rb) {
    const std::pair<const char*, double CategoryRow::*> metrics[] = {
        {"ip", &CategoryRow::ip}, {"cs", &CategoryRow::cs}, {"alignment", &CategoryRow::alignment}};
    for (const auto& [name, field] : metrics) {
      DeltaRow d;
      d.category = ra.category;
      d.metric = name;
      d.a = ra.*field;
      d.b = rb.*field;
      d.abs_delta = d.b - d.a;
      if (d.a != 0.0) d.rel_delta = d.abs_delta / d.a;
      cmp.rows.push_back(std::move(d));
    }
  };
  for (std::size_t i = 0; i < a.categories.size(); ++i) add(a.categories[i], b.categories[i]);
  add(a.overall, b.overall);
  return cmp;
}

}  // namespace promptforge::eval
