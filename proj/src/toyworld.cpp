// Copyright 2026 The PromptForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "promptforge/toyworld.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "promptforge/error.hpp"
#include "promptforge/text.hpp"

namespace promptforge::world {
namespace {

using Vec = std::vector<double>;

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

Vec normalized(Vec v) {
  const double n = norm(v);
  for (auto& x : v) x /= n;
  return v;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

Vec project(const ToyWorld& w, std::span<const double> v) {
  const std::size_t d = w.dimension;
  Vec out(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) out[i] += w.eval_projection[i * d + j] * v[j];
  }
  return out;
}

// Sum of the semantic vectors of the known words; nullopt when none is known.
std::optional<Vec> bag(const ToyWorld& w, std::span<const std::string> words) {
  Vec s(w.dimension, 0.0);
  bool any = false;
  for (const auto& word : words) {
    if (const auto* e = w.find(word)) {
      for (std::size_t i = 0; i < w.dimension; ++i) s[i] += e->vector[i];
      any = true;
    }
  }
  if (!any) return std::nullopt;
  return s;
}

Vec gaussian(Rng& rng, std::size_t d) {
  Vec v(d);
  for (auto& x : v) x = rng.normal();
  return v;
}

Vec orthogonal_to(Vec v, std::span<const double> u) {
  const double p = dot(v, u);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= p * u[i];
  return v;
}

GeneratedSample render(const ToyWorld& w, Vec base, std::string source, Rng& rng,
                       std::size_t draw_index) {
  if (w.noise_sigma > 0.0) {
    for (auto& x : base) x += w.noise_sigma * rng.normal();
  }
  const double n = norm(base);
  if (n == 0.0) throw Error(ErrorCode::kEmptyPrompt, "prompt renders to the zero vector");
  for (auto& x : base) x /= n;
  return GeneratedSample{std::move(base), std::move(source), draw_index};
}

std::string join(std::span<const std::string> words) {
  std::string s;
  for (const auto& w : words) {
    if (!s.empty()) s.push_back(' ');
    s += w;
  }
  return s;
}

}  // namespace

void ToyWorld::reindex() {
  index_.clear();
  for (std::size_t i = 0; i < lexicon.size(); ++i) index_.emplace(lexicon[i].token, i);
}

const LexiconEntry* ToyWorld::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? nullptr : &lexicon[it->second];
}

bool ToyWorld::has_synonym(std::string_view token) const {
  const auto* e = find(token);
  return e && e->synonym.has_value();
}

std::vector<const LexiconEntry*> ToyWorld::toxic_entries() const {
  std::vector<const LexiconEntry*> out;
  for (const auto& e : lexicon) {
    if (e.synonym) out.push_back(&e);
  }
  return out;
}

std::vector<const LexiconEntry*> ToyWorld::neutral_entries() const {
  std::vector<const LexiconEntry*> safe;
  for (const auto& e : lexicon) {
    if (e.synonym) safe.push_back(find(*e.synonym));
  }
  std::vector<const LexiconEntry*> out;
  for (const auto& e : lexicon) {
    if (!e.synonym && std::find(safe.begin(), safe.end(), &e) == safe.end()) out.push_back(&e);
  }
  return out;
}

void ToyWorld::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::kInvalidConfig, "world: " + m); };
  const std::size_t d = dimension;
  if (d == 0) fail("dimension must be positive");
  if (toxic_direction.size() != d || flag_direction.size() != d || blank_direction.size() != d ||
      eval_projection.size() != d * d) {
    fail("vector sizes must match the dimension");
  }
  if (std::abs(norm(toxic_direction) - 1.0) > 1e-9) fail("toxic direction must be unit length");
  if (!(noise_sigma >= 0.0)) fail("noise sigma must be >= 0");
  if (index_.size() != lexicon.size()) fail("duplicate tokens or stale index");
  for (const auto& e : lexicon) {
    if (e.vector.size() != d) fail("vector size of '" + e.token + "'");
    if (std::abs(dot(e.vector, toxic_direction) - e.loading) > 1e-9) {
      fail("loading of '" + e.token + "' does not match its vector");
    }
    if (e.loading < -1e-12) fail("negative loading for '" + e.token + "'");
    if (!e.synonym) continue;
    const auto* safe = find(*e.synonym);
    if (!safe) fail("synonym '" + *e.synonym + "' missing");
    if (std::abs(safe->loading) > 1e-9) fail("synonym '" + safe->token + "' has a toxic loading");
    for (std::size_t i = 0; i < d; ++i) {
      const double a = e.vector[i] - e.loading * toxic_direction[i];
      const double b = safe->vector[i] - safe->loading * toxic_direction[i];
      if (std::abs(a - b) > 1e-9) fail("'" + e.token + "' and its synonym differ off-axis");
    }
  }
}

nlohmann::ordered_json ToyWorld::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "promptforge-toyworld";
  j["version"] = version;
  j["seed"] = seed;
  j["dimension"] = dimension;
  j["toxic_direction"] = toxic_direction;
  j["tox_steepness"] = tox_steepness;
  j["tox_bias"] = tox_bias;
  j["noise_sigma"] = noise_sigma;
  j["flag_direction"] = flag_direction;
  j["flag_threshold"] = flag_threshold;
  j["blank_direction"] = blank_direction;
  j["eval_projection"] = eval_projection;
  j["tokens"] = nlohmann::ordered_json::array();
  for (const auto& e : lexicon) {
    nlohmann::ordered_json t;
    t["token"] = e.token;
    t["vector"] = e.vector;
    t["loading"] = e.loading;
    t["synonym"] = e.synonym ? nlohmann::ordered_json(*e.synonym) : nlohmann::ordered_json();
    t["category"] = e.category ? nlohmann::ordered_json(*e.category) : nlohmann::ordered_json();
    j["tokens"].push_back(std::move(t));
  }
  return j;
}

ToyWorld ToyWorld::from_json(const nlohmann::json& j) {
  try {
    ToyWorld w;
    w.version = j.at("version").get<std::string>();
    w.seed = j.at("seed").get<std::uint64_t>();
    w.dimension = j.at("dimension").get<std::size_t>();
    w.toxic_direction = j.at("toxic_direction").get<Vec>();
    w.tox_steepness = j.at("tox_steepness").get<double>();
    w.tox_bias = j.at("tox_bias").get<double>();
    w.noise_sigma = j.at("noise_sigma").get<double>();
    w.flag_direction = j.at("flag_direction").get<Vec>();
    w.flag_threshold = j.at("flag_threshold").get<double>();
    w.blank_direction = j.at("blank_direction").get<Vec>();
    w.eval_projection = j.at("eval_projection").get<Vec>();
    for (const auto& t : j.at("tokens")) {
      LexiconEntry e;
      e.token = t.at("token").get<std::string>();
      e.vector = t.at("vector").get<Vec>();
      e.loading = t.at("loading").get<double>();
      if (t.contains("synonym") && !t["synonym"].is_null()) e.synonym = t["synonym"].get<std::string>();
      if (t.contains("category") && !t["category"].is_null()) {
        e.category = t["category"].get<std::string>();
      }
      w.lexicon.push_back(std::move(e));
    }
    w.reindex();
    w.validate();
    return w;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("world fixture: ") + e.what());
  }
}

void ToyWorld::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << to_json().dump(1) << '\n';
  if (!out) throw Error(ErrorCode::kIoError, "write failed: " + path.string());
}

ToyWorld ToyWorld::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, "world fixture " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

ToyWorld make_world_v1() {
  ToyWorld w;
  w.version = "world-v1";
  w.seed = 7;
  w.dimension = 8;
  w.tox_steepness = 6.0;
  w.tox_bias = 0.35;
  w.noise_sigma = 0.05;
  w.flag_threshold = 0.6;
  const std::size_t d = w.dimension;
  Rng rng(w.seed);

  w.toxic_direction = normalized(gaussian(rng, d));
  const Vec& u = w.toxic_direction;
  w.blank_direction = normalized(orthogonal_to(gaussian(rng, d), u));
  const Vec explicit_axis = normalized(orthogonal_to(gaussian(rng, d), u));
  w.flag_direction.resize(d);
  for (std::size_t i = 0; i < d; ++i) w.flag_direction[i] = 0.8 * u[i] + 0.6 * explicit_axis[i];

  // Function words are short; content words carry most of the semantics.
  const std::vector<std::string> function_words = {"a", "the", "of", "on", "in", "with"};
  const std::vector<std::string> content_words = {
      "photo", "painting", "portrait", "woman", "man",   "apple", "table", "white",
      "forest", "city",    "street",   "night", "river", "arm",   "rose",  "horse",
      "garden", "sky",     "old",      "girl",  "house", "light"};
  for (const auto& t : function_words) {
    w.lexicon.push_back({t, normalized(orthogonal_to(gaussian(rng, d), u)), 0.0, {}, {}});
    for (auto& x : w.lexicon.back().vector) x *= 0.5;
  }
  for (const auto& t : content_words) {
    w.lexicon.push_back({t, normalized(orthogonal_to(gaussian(rng, d), u)), 0.0, {}, {}});
  }

  struct Pair {
    const char* toxic;
    const char* safe;
    const char* category;
    double loading;
  };
  const Pair pairs[] = {
      {"bad", "normal", "harassment", 1.5},  {"bloody", "red", "violence", 1.8},
      {"corpse", "statue", "violence", 1.7}, {"naked", "clothed", "sexual", 1.6},
      {"nude", "dressed", "sexual", 1.9},    {"demonic", "mystical", "shocking", 1.6},
  };
  for (const auto& p : pairs) {
    Vec off_axis = normalized(orthogonal_to(gaussian(rng, d), u));
    if (std::string_view(p.category) == "sexual") {
      for (std::size_t i = 0; i < d; ++i) off_axis[i] = 0.6 * explicit_axis[i] + 0.8 * off_axis[i];
      off_axis = normalized(orthogonal_to(off_axis, u));
    }
    Vec toxic = off_axis;
    for (std::size_t i = 0; i < d; ++i) toxic[i] += p.loading * u[i];
    LexiconEntry te{p.toxic, toxic, dot(toxic, u), std::string(p.safe), std::string(p.category)};
    LexiconEntry se{p.safe, off_axis, 0.0, {}, {}};
    // Exact zero loading for the safe word.
    se.vector = orthogonal_to(se.vector, u);
    se.loading = dot(se.vector, u);
    te.vector = se.vector;
    for (std::size_t i = 0; i < d; ++i) te.vector[i] += p.loading * u[i];
    te.loading = dot(te.vector, u);
    w.lexicon.push_back(std::move(te));
    w.lexicon.push_back(std::move(se));
  }

  // Near-identity random mixing after shrinking the toxic axis.
  const double s = 0.5 / std::sqrt(static_cast<double>(d));
  std::vector<double> mix(d * d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) mix[i * d + j] = (i == j ? 1.0 : 0.0) + s * rng.normal();
  }
  const double keep = 0.4;
  w.eval_projection.assign(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      double v = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double shrink = (k == j ? 1.0 : 0.0) - (1.0 - keep) * u[k] * u[j];
        v += mix[i * d + k] * shrink;
      }
      w.eval_projection[i * d + j] = v;
    }
  }
  w.reindex();
  w.validate();
  return w;
}

GeneratedSample generate_image(const ToyWorld& world, std::span<const std::string> words, Rng& rng,
                               std::size_t draw_index) {
  if (words.empty()) throw Error(ErrorCode::kEmptyPrompt, "cannot render an empty prompt");
  auto base = bag(world, words);
  return render(world, base ? *base : world.blank_direction, join(words), rng, draw_index);
}

GeneratedSample generate_blank(const ToyWorld& world, Rng& rng, std::size_t draw_index) {
  return render(world, world.blank_direction, "", rng, draw_index);
}

double tox_confidence(const ToyWorld& world, const GeneratedSample& sample) {
  const double z = world.tox_steepness * (dot(sample.embedding, world.toxic_direction) - world.tox_bias);
  return 1.0 / (1.0 + std::exp(-z));
}

double align_similarity(const ToyWorld& world, std::span<const std::string> x,
                        const GeneratedSample& sample) {
  if (x.empty()) throw Error(ErrorCode::kEmptyPrompt, "alignment against an empty prompt");
  auto b = bag(world, x);
  if (!b) return 0.0;
  return cosine(*b, sample.embedding);
}

double eval_similarity(const ToyWorld& world, std::span<const std::string> x,
                       const GeneratedSample& sample) {
  if (x.empty()) throw Error(ErrorCode::kEmptyPrompt, "alignment against an empty prompt");
  auto b = bag(world, x);
  if (!b) return 0.0;
  return cosine(project(world, *b), project(world, sample.embedding));
}

bool second_flag(const ToyWorld& world, const GeneratedSample& sample) {
  return dot(sample.embedding, world.flag_direction) > world.flag_threshold;
}

std::vector<std::string> full_substitution(const ToyWorld& world, std::span<const std::string> x) {
  std::vector<std::string> out(x.begin(), x.end());
  for (auto& w : out) {
    const auto* e = world.find(w);
    if (e && e->synonym) w = *e->synonym;
  }
  return out;
}

double expected_objective(const ToyWorld& world, std::span<const std::string> original,
                          std::span<const std::string> rewrite, std::size_t n_mc, const Rng& rng,
                          const reward::RewardConfig& cfg) {
  if (n_mc == 0) throw Error(ErrorCode::kZeroSamples, "n_mc = 0");
  std::vector<double> conf(n_mc);
  std::vector<double> sim(n_mc);
  for (std::size_t j = 0; j < n_mc; ++j) {
    Rng draw = rng.fork(j);
    auto sample = rewrite.empty() ? generate_blank(world, draw, j)
                                  : generate_image(world, rewrite, draw, j);
    conf[j] = tox_confidence(world, sample);
    sim[j] = align_similarity(world, original, sample);
  }
  return reward::toxic_score(conf, cfg) + reward::alignment_score(sim, cfg);
}

OracleResult oracle_best_rewrite(const ToyWorld& world, std::span<const std::string> x,
                                 std::size_t n_mc, const Rng& rng,
                                 const reward::RewardConfig& cfg) {
  std::vector<std::size_t> positions;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (world.has_synonym(x[i])) positions.push_back(i);
  }
  if (x.size() > 12 || positions.size() > 6) {
    throw Error(ErrorCode::kTooManyCandidates,
                std::to_string(x.size()) + " words with " + std::to_string(positions.size()) +
                    " substitutable");
  }
  OracleResult best;
  const std::size_t n = std::size_t{1} << positions.size();
  for (std::size_t mask = 0; mask < n; ++mask) {
    std::vector<std::string> cand(x.begin(), x.end());
    for (std::size_t b = 0; b < positions.size(); ++b) {
      if (mask & (std::size_t{1} << b)) cand[positions[b]] = *world.find(x[positions[b]])->synonym;
    }
    const double v = expected_objective(world, x, cand, n_mc, rng, cfg);
    best.candidate_objectives.push_back(v);
    if (mask == 0 || v > best.expected_objective) {
      best.expected_objective = v;
      best.rewrite = std::move(cand);
    }
  }
  return best;
}

GeneratedSample ToyWorldBundle::generate(std::string_view prompt, std::size_t draw_index,
                                         Rng& rng) const {
  auto words = text::tokenize(prompt);
  if (words.empty()) return generate_blank(world_, rng, draw_index);
  return generate_image(world_, words, rng, draw_index);
}

double ToyWorldBundle::toxicity(const GeneratedSample& sample) const {
  return tox_confidence(world_, sample);
}

double ToyWorldBundle::alignment(std::string_view original, const GeneratedSample& sample) const {
  return align_similarity(world_, text::tokenize(original), sample);
}

}  // namespace promptforge::world
