// Copyright 2026 The PromptForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "promptforge/config.hpp"

#include <fstream>

#include "promptforge/error.hpp"

namespace promptforge::config {
namespace {

void check_known(const nlohmann::json& defaults, const nlohmann::json& doc, const std::string& prefix) {
  if (!doc.is_object() || !defaults.is_object()) return;
  for (const auto& [key, value] : doc.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!defaults.contains(key)) throw Error(ErrorCode::kInvalidConfig, "unknown config key '" + path + "'");
    check_known(defaults[key], value, path);
  }
}

}  // namespace

void RunConfig::derive_seeds() {
  const Rng root(seed);
  sft.seed = root.fork("sft").seed();
  ppo.seed = root.fork("ppo").seed();
  eval.seed = root.fork("eval").seed();
}

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["paths"] = {{"data_dir", paths.data_dir.string()},
                {"checkpoint_dir", paths.checkpoint_dir.string()},
                {"report_dir", paths.report_dir.string()},
                {"world", paths.world.string()}};
  j["vocab"] = {{"max_size", vocab_max_size}};
  j["pairs"] = {{"source", pairs.source},
                {"count", pairs.count},
                {"miss_rate", pairs.miss_rate},
                {"input", pairs.input.string()}};
  j["split"] = {{"sft", split.sft}, {"ppo", split.ppo}, {"eval", split.eval}, {"template", split.templates}};
  auto sub = [](const nlohmann::json& v) { return nlohmann::ordered_json::parse(v.dump()); };
  j["policy"] = sub(policy.to_json());
  j["sft"] = sub(sft.to_json());
  j["ppo"] = sub(ppo.to_json());
  j["reward"] = sub(reward.to_json());
  j["eval"] = sub(eval.to_json());
  j["endpoint"] = sub(endpoint.to_json());
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    if (j.contains("paths")) {
      const auto& p = j["paths"];
      c.paths.data_dir = p.value("data_dir", c.paths.data_dir.string());
      c.paths.checkpoint_dir = p.value("checkpoint_dir", c.paths.checkpoint_dir.string());
      c.paths.report_dir = p.value("report_dir", c.paths.report_dir.string());
      c.paths.world = p.value("world", c.paths.world.string());
    }
    if (j.contains("vocab")) c.vocab_max_size = j["vocab"].value("max_size", c.vocab_max_size);
    if (j.contains("pairs")) {
      const auto& p = j["pairs"];
      c.pairs.source = p.value("source", c.pairs.source);
      c.pairs.count = p.value("count", c.pairs.count);
      c.pairs.miss_rate = p.value("miss_rate", c.pairs.miss_rate);
      c.pairs.input = p.value("input", c.pairs.input.string());
    }
    if (j.contains("split")) {
      const auto& s = j["split"];
      c.split.sft = s.value("sft", c.split.sft);
      c.split.ppo = s.value("ppo", c.split.ppo);
      c.split.eval = s.value("eval", c.split.eval);
      c.split.templates = s.value("template", c.split.templates);
    }
    const auto empty = nlohmann::json::object();
    c.policy = policy::PolicyConfig::from_json(j.value("policy", empty));
    c.sft = sft::SftConfig::from_json(j.value("sft", empty));
    c.reward = reward::RewardConfig::from_json(j.value("reward", empty));
    c.ppo = ppo::PpoConfig::from_json(j.value("ppo", empty));
    c.ppo.reward = c.reward;
    c.eval = eval::EvalConfig::from_json(j.value("eval", empty));
    c.endpoint = foundry::EndpointConfig::from_json(j.value("endpoint", empty));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("config: ") + e.what());
  }
  if (c.pairs.source != "synthetic" && c.pairs.source != "llm") {
    throw Error(ErrorCode::kInvalidConfig, "pairs.source must be 'synthetic' or 'llm'");
  }
  c.reward.validate();
  c.ppo.validate();
  c.derive_seeds();
  return c;
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error(ErrorCode::kInvalidConfig, "override '" + assignment + "' is not key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::parse_error&) {
    value = raw;
  }
  nlohmann::json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty() || !node->is_object() || !node->contains(part)) {
      throw Error(ErrorCode::kInvalidConfig, "unknown config key '" + key + "'");
    }
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (node->is_string() && !value.is_string()) value = raw;
  *node = std::move(value);
}

RunConfig load_run_config(const std::optional<std::filesystem::path>& file,
                          std::span<const std::string> overrides) {
  const auto defaults = nlohmann::json::parse(RunConfig{}.to_json().dump());
  nlohmann::json doc = defaults;
  if (file) {
    std::ifstream in(*file, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIoError, "cannot read config file " + file->string());
    nlohmann::json patch;
    try {
      patch = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::kInvalidConfig, file->string() + ": " + e.what());
    }
    check_known(defaults, patch, "");
    doc.merge_patch(patch);
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return RunConfig::from_json(doc);
}

world::ToyWorld load_world(const RunConfig& cfg) {
  if (cfg.paths.world.empty()) return world::make_world_v1();
  return world::ToyWorld::load(cfg.paths.world);
}

}  // namespace promptforge::config
