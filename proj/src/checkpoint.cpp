// Copyright 2026 The PromptForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "promptforge/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "promptforge/error.hpp"

namespace promptforge {
namespace {

constexpr char kMagic[8] = {'P', 'F', 'C', 'K', 'P', 'T', '\0', '\1'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little endian");

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error(ErrorCode::kIoError, "truncated checkpoint " + path.string());
  return v;
}

}  // namespace

const NamedTensor& TensorArchive::get(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw Error(ErrorCode::kIoError, "archive has no tensor '" + name + "'");
}

void TensorArchive::write(const std::filesystem::path& path) const {
  nlohmann::json header;
  header["meta"] = meta;
  header["tensors"] = nlohmann::json::array();
  for (const auto& t : tensors) {
    header["tensors"].push_back({{"name", t.name}, {"shape", t.shape}});
  }
  const std::string h = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, h.size());
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (const auto& t : tensors) {
    out.write(reinterpret_cast<const char*>(t.values.data()),
              static_cast<std::streamsize>(t.values.size() * sizeof(double)));
  }
  if (!out) throw Error(ErrorCode::kIoError, "write failed: " + path.string());
}

TensorArchive TensorArchive::read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::kIoError, "not a checkpoint: " + path.string());
  }
  const auto version = read_raw<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::kIoError, "unsupported checkpoint version " + std::to_string(version));
  }
  const auto hlen = read_raw<std::uint64_t>(in, path);
  std::string h(hlen, '\0');
  in.read(h.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw Error(ErrorCode::kIoError, "truncated checkpoint " + path.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(h);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kIoError, "bad checkpoint header: " + std::string(e.what()));
  }
  TensorArchive a;
  a.meta = header.at("meta");
  for (const auto& t : header.at("tensors")) {
    NamedTensor nt;
    nt.name = t.at("name").get<std::string>();
    nt.shape = t.at("shape").get<std::vector<std::size_t>>();
    std::size_t n = 1;
    for (auto s : nt.shape) n *= s;
    nt.values.resize(n);
    in.read(reinterpret_cast<char*>(nt.values.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw Error(ErrorCode::kIoError, "truncated tensor '" + nt.name + "'");
    a.tensors.push_back(std::move(nt));
  }
  return a;
}

TensorArchive to_archive(const text::Vocabulary& vocab, const policy::PolicyParameters& params) {
  TensorArchive a;
  a.meta["kind"] = "policy";
  a.meta["config"] = params.config().to_json();
  a.meta["role"] = policy::to_string(params.role());
  a.meta["vocab"] = std::vector<std::string>(vocab.tokens().begin() + text::kNumSpecials,
                                             vocab.tokens().end());
  for (const auto& s : params.layout()) {
    auto v = params.tensor(s.name);
    a.tensors.push_back(NamedTensor{s.name, s.shape, std::vector<double>(v.begin(), v.end())});
  }
  return a;
}

Checkpoint from_archive(const TensorArchive& a) {
  auto vocab = text::Vocabulary::from_words(a.meta.at("vocab").get<std::vector<std::string>>());
  auto config = policy::PolicyConfig::from_json(a.meta.at("config"));
  policy::PolicyParameters params(config,
                                  policy::role_from_string(a.meta.at("role").get<std::string>()));
  for (const auto& s : params.layout()) {
    const auto& t = a.get(s.name);
    if (t.shape != s.shape) throw Error(ErrorCode::kIoError, "shape mismatch for " + s.name);
    std::copy(t.values.begin(), t.values.end(), params.tensor(s.name).begin());
  }
  return Checkpoint{std::move(vocab), std::move(params)};
}

void save_checkpoint(const std::filesystem::path& path, const text::Vocabulary& vocab,
                     const policy::PolicyParameters& params) {
  to_archive(vocab, params).write(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return from_archive(TensorArchive::read(path));
}

}  // namespace promptforge
