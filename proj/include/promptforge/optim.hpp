// Copyright 2026 The PromptForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "promptforge/policy.hpp"

namespace promptforge::optim {

/// Bias-corrected adaptive-moment (Adam) state over a flat parameter vector.
struct OptimizerState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  explicit OptimizerState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// Updates params[i] where mask is empty or mask[i] is true. Throws
/// NonFiniteGradient (state untouched) or InvalidConfig on size mismatch.
void optimizer_step(OptimizerState& state, std::span<double> params, std::span<const double> grads,
                    double lr, std::span<const bool> mask = {});

/// Applies the update to the trainable tensors of `params` only.
void optimizer_step(OptimizerState& state, policy::PolicyParameters& params,
                    const policy::GradientSet& grads, double lr);

}  // namespace promptforge::optim
