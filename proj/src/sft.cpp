// Copyright 2026 The PromptForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "promptforge/sft.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "promptforge/checkpoint.hpp"
#include "promptforge/error.hpp"

namespace promptforge::sft {

void SftConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::kInvalidConfig, "sft: " + m); };
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (batch_size == 0) fail("batch_size must be >= 1");
  if (accumulation == 0) fail("accumulation must be >= 1");
  if (epochs == 0 && max_steps == 0) fail("epochs must be >= 1");
}

nlohmann::json SftConfig::to_json() const {
  return {{"learning_rate", learning_rate}, {"batch_size", batch_size},
          {"accumulation", accumulation},   {"epochs", epochs},
          {"max_steps", max_steps},         {"checkpoint_every", checkpoint_every},
          {"seed", seed}};
}

SftConfig SftConfig::from_json(const nlohmann::json& j) {
  SftConfig c;
  try {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.accumulation = j.value("accumulation", c.accumulation);
    c.epochs = j.value("epochs", c.epochs);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("sft: ") + e.what());
  }
  c.validate();
  return c;
}

std::size_t SftExample::target_count() const {
  return static_cast<std::size_t>(
      std::count_if(targets.begin(), targets.end(), [](TokenId t) { return t >= 0; }));
}

SftExample make_example(const PromptPair& pair, std::size_t extra_pad) {
  const auto f = policy::frame(pair.toxic.tokens, pair.clean.tokens, true);
  SftExample ex;
  ex.input.assign(f.tokens.begin(), f.tokens.end() - 1);
  ex.targets.assign(ex.input.size(), -1);
  for (std::size_t t = f.target_begin; t < f.tokens.size(); ++t) ex.targets[t - 1] = f.tokens[t];
  for (std::size_t i = 0; i < extra_pad; ++i) {
    ex.input.push_back(text::Vocabulary::pad());
    ex.targets.push_back(-1);
  }
  return ex;
}

namespace {

std::vector<SftExample> examples_of(std::span<const PromptPair> pairs) {
  std::vector<SftExample> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(make_example(p));
  return out;
}

std::size_t count_targets(std::span<const SftExample> batch) {
  std::size_t n = 0;
  for (const auto& ex : batch) n += ex.target_count();
  return n;
}

}  // namespace

double sft_loss(const PolicyParameters& params, std::span<const SftExample> batch) {
  if (batch.empty()) throw Error(ErrorCode::kEmptyBatch, "sft_loss on an empty batch");
  double total = 0.0;
  for (const auto& ex : batch) {
    const auto out = policy::forward_logits(params, ex.input);
    for (std::size_t t = 0; t < ex.targets.size(); ++t) {
      if (ex.targets[t] < 0) continue;
      total -= policy::log_softmax_at(out.row(t), static_cast<std::size_t>(ex.targets[t]));
    }
  }
  return total / static_cast<double>(count_targets(batch));
}

double sft_loss(const PolicyParameters& params, std::span<const PromptPair> batch) {
  const auto ex = examples_of(batch);
  return sft_loss(params, std::span<const SftExample>(ex));
}

policy::LossAndGradient sft_gradient(const PolicyParameters& params,
                                     std::span<const SftExample> batch, double normalizer) {
  std::vector<std::vector<TokenId>> inputs;
  inputs.reserve(batch.size());
  for (const auto& ex : batch) inputs.push_back(ex.input);
  const std::size_t V = params.config().vocab_size;
  auto loss = [&](std::size_t i, const policy::ForwardOutput& out, policy::OutputGradient& g) {
    const auto& targets = batch[i].targets;
    double nll = 0.0;
    for (std::size_t t = 0; t < targets.size(); ++t) {
      if (targets[t] < 0) continue;
      const auto row = out.row(t);
      const auto p = policy::softmax(row);
      const auto y = static_cast<std::size_t>(targets[t]);
      nll -= policy::log_softmax_at(row, y);
      double* d = g.dlogits.data() + t * V;
      for (std::size_t k = 0; k < V; ++k) d[k] += p[k] / normalizer;
      d[y] -= 1.0 / normalizer;
    }
    return nll / normalizer;
  };
  return policy::grad_loss(params, inputs, loss);
}

nlohmann::ordered_json SftMetric::to_json() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["epoch"] = epoch;
  j["loss"] = loss;
  j["lr"] = lr;
  j["tokens"] = tokens;
  return j;
}

std::size_t steps_per_epoch(std::size_t n, const SftConfig& config) {
  const std::size_t per_step = config.batch_size * config.accumulation;
  return (n + per_step - 1) / per_step;
}

SftResult train_sft(const foundry::DatasetSplits& split, const SftConfig& config,
                    const PolicyParameters& params, Rng& rng, const SftState* resume,
                    const SftCheckpointHook& on_checkpoint) {
  config.validate();
  if (split.sft.empty()) throw Error(ErrorCode::kEmptyDataset, "the SFT split is empty");
  const std::size_t n = split.sft.size();
  const auto examples = examples_of(split.sft);
  const std::size_t spe = steps_per_epoch(n, config);
  const std::size_t total_steps = config.max_steps > 0 ? config.max_steps : spe * config.epochs;

  SftResult result;
  if (resume) {
    result.state = *resume;
  } else {
    result.state.params = params;
    result.state.optimizer = optim::OptimizerState(params.values().size());
  }
  auto& st = result.state;
  st.params.set_role(policy::Role::kTrainablePolicy);

  std::vector<std::size_t> order;
  std::size_t order_epoch = static_cast<std::size_t>(-1);
  const std::size_t per_step = config.batch_size * config.accumulation;
  while (st.step < total_steps) {
    const std::size_t epoch = st.step / spe;
    const std::size_t group = st.step % spe;
    if (epoch != order_epoch) {
      order.resize(n);
      std::iota(order.begin(), order.end(), std::size_t{0});
      rng.fork(epoch).shuffle(order);
      order_epoch = epoch;
    }
    const std::size_t begin = group * per_step;
    const std::size_t end = std::min(n, begin + per_step);
    std::vector<SftExample> step_batch;
    for (std::size_t i = begin; i < end; ++i) step_batch.push_back(examples[order[i]]);
    const double tokens = static_cast<double>(count_targets(step_batch));

    policy::GradientSet grads(st.params);
    double loss = 0.0;
    for (std::size_t mb = 0; mb * config.batch_size < step_batch.size(); ++mb) {
      const std::size_t b0 = mb * config.batch_size;
      const std::size_t b1 = std::min(step_batch.size(), b0 + config.batch_size);
      auto lg = sft_gradient(st.params,
                             std::span<const SftExample>(step_batch).subspan(b0, b1 - b0), tokens);
      loss += lg.loss;
      grads.add(lg.grads);
    }
    optim::optimizer_step(st.optimizer, st.params, grads, config.learning_rate);
    ++st.step;
    result.log.push_back(
        SftMetric{st.step, epoch, loss, config.learning_rate, static_cast<std::size_t>(tokens)});
    if (on_checkpoint && config.checkpoint_every > 0 && st.step % config.checkpoint_every == 0) {
      on_checkpoint(st);
    }
  }
  st.params.set_role(policy::Role::kSftReference);
  return result;
}

void save_state(const std::filesystem::path& path, const text::Vocabulary& vocab,
                const SftState& state) {
  auto a = to_archive(vocab, state.params);
  a.meta["kind"] = "sft-state";
  a.meta["step"] = state.step;
  a.meta["optimizer"] = {{"step", state.optimizer.step},
                         {"beta1", state.optimizer.beta1},
                         {"beta2", state.optimizer.beta2},
                         {"epsilon", state.optimizer.epsilon}};
  const std::vector<std::size_t> shape = {state.optimizer.m.size()};
  a.tensors.push_back(NamedTensor{"optimizer.m", shape, state.optimizer.m});
  a.tensors.push_back(NamedTensor{"optimizer.v", shape, state.optimizer.v});
  a.write(path);
}

SftState load_state(const std::filesystem::path& path) {
  const auto a = TensorArchive::read(path);
  if (a.meta.value("kind", "") != "sft-state") {
    throw Error(ErrorCode::kIoError, path.string() + " is not an SFT training state");
  }
  SftState s;
  s.params = from_archive(a).params;
  s.step = a.meta.at("step").get<std::size_t>();
  const auto& o = a.meta.at("optimizer");
  s.optimizer.m = a.get("optimizer.m").values;
  s.optimizer.v = a.get("optimizer.v").values;
  s.optimizer.step = o.at("step").get<std::uint64_t>();
  s.optimizer.beta1 = o.at("beta1").get<double>();
  s.optimizer.beta2 = o.at("beta2").get<double>();
  s.optimizer.epsilon = o.at("epsilon").get<double>();
  return s;
}

}  // namespace promptforge::sft
