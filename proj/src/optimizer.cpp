// SPDX-License-Identifier: Apache-2.0
#include "seqgen/optimizer.hpp"

#include <cmath>

#include "seqgen/error.hpp"

namespace seqgen {
namespace {

void require_same_shapes(const ParamSet& a, const ParamSet& b) {
  if (!a.same_shapes(b)) throw DimensionMismatch("optimizer: parameter/gradient shapes differ");
}

}  // namespace

ParamSet sgd_step(const ParamSet& params, const ParamSet& grads, double lr) {
  require_same_shapes(params, grads);
  ParamSet out = params;
  for (std::size_t i = 0; i < out.tensors().size(); ++i) {
    auto& p = out.tensors()[i].data;
    const auto& g = grads.tensors()[i].data;
    for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr * g[j];
  }
  if (!out.all_finite()) throw NonFinite("sgd step produced non-finite parameters");
  return out;
}

AdamState AdamState::zeros_like(const ParamSet& params) {
  return AdamState{params.zeros_like(), params.zeros_like(), 0};
}

ParamSet adam_step(const ParamSet& params, const ParamSet& grads, AdamState& state,
                   const AdamHyper& hyper) {
  require_same_shapes(params, grads);
  require_same_shapes(params, state.m);
  require_same_shapes(params, state.v);
  AdamState next = state;
  next.step += 1;
  const double t = static_cast<double>(next.step);
  const double correction1 = 1.0 - std::pow(hyper.beta1, t);
  const double correction2 = 1.0 - std::pow(hyper.beta2, t);
  ParamSet out = params;
  for (std::size_t i = 0; i < out.tensors().size(); ++i) {
    auto& p = out.tensors()[i].data;
    auto& m = next.m.tensors()[i].data;
    auto& v = next.v.tensors()[i].data;
    const auto& g = grads.tensors()[i].data;
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (g[j] == 0.0 && m[j] == 0.0 && v[j] == 0.0) continue;
      m[j] = hyper.beta1 * m[j] + (1.0 - hyper.beta1) * g[j];
      v[j] = hyper.beta2 * v[j] + (1.0 - hyper.beta2) * g[j] * g[j];
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      p[j] -= hyper.lr * m_hat / (std::sqrt(v_hat) + hyper.epsilon);
    }
  }
  if (!out.all_finite()) throw NonFinite("adam step produced non-finite parameters");
  state = std::move(next);
  return out;
}

void round_to_single(ParamSet& params) {
  for (auto& t : params.tensors())
    for (double& x : t.data) x = static_cast<double>(static_cast<float>(x));
}

}  // namespace seqgen
