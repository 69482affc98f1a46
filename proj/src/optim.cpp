// Copyright 2026 The PromptForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "promptforge/optim.hpp"

#include <cmath>
#include <memory>

#include "promptforge/error.hpp"

namespace promptforge::optim {

void optimizer_step(OptimizerState& state, std::span<double> params, std::span<const double> grads,
                    double lr, std::span<const bool> mask) {
  const std::size_t n = params.size();
  if (grads.size() != n || state.m.size() != n || state.v.size() != n ||
      (!mask.empty() && mask.size() != n)) {
    throw Error(ErrorCode::kInvalidConfig, "optimizer shape mismatch");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if ((mask.empty() || mask[i]) && !std::isfinite(grads[i])) {
      throw Error(ErrorCode::kNonFiniteGradient, "gradient entry " + std::to_string(i));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask.empty() && !mask[i]) continue;
    const double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
  }
}

void optimizer_step(OptimizerState& state, policy::PolicyParameters& params,
                    const policy::GradientSet& grads, double lr) {
  const auto& layout = params.layout();
  const std::size_t n = params.values().size();
  auto mask = std::make_unique<bool[]>(n);
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const bool on = grads.trainable()[i];
    for (std::size_t k = 0; k < layout[i].size; ++k) mask[layout[i].offset + k] = on;
  }
  optimizer_step(state, params.values(), grads.flat(), lr, std::span<const bool>(mask.get(), n));
}

}  // namespace promptforge::optim
