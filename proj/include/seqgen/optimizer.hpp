// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "seqgen/neural_net.hpp"

namespace seqgen {

/// params - lr * grads. Throws NonFinite if the result overflows.
ParamSet sgd_step(const ParamSet& params, const ParamSet& grads, double lr);

struct AdamHyper {
  double lr = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  ParamSet m;
  ParamSet v;
  std::uint64_t step = 0;

  static AdamState zeros_like(const ParamSet& params);
};

/// Bias-corrected Adam. Returns the updated parameters; `state` advances one step.
ParamSet adam_step(const ParamSet& params, const ParamSet& grads, AdamState& state,
                   const AdamHyper& hyper);

/// Rounds every entry to the nearest single-precision value.
void round_to_single(ParamSet& params);

}  // namespace seqgen
