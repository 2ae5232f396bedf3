// Copyright 2026 the flowplan authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FLOWPLAN_AD_ADAM_HPP
#define FLOWPLAN_AD_ADAM_HPP

#include <cmath>
#include <cstdint>
#include <vector>

#include "flowplan/ad/tape.hpp"

namespace flowplan::ad {

struct AdamConfig {
  double lr{3e-4};
  double beta1{0.9};
  double beta2{0.999};
  double eps{1e-8};
};

/// First/second-moment state plus the global step counter (used for bias
/// correction and checkpoint resume).
template <typename Scalar>
struct AdamState {
  std::vector<Tensor<Scalar>> m;
  std::vector<Tensor<Scalar>> v;
  std::int64_t step{0};

  void ensure(const ParamStore<Scalar>& params) {
    const auto n = static_cast<std::size_t>(params.count());
    if (m.size() == n) return;
    m.resize(n);
    v.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = Tensor<Scalar>(params.value(static_cast<int>(i)).shape);
      v[i] = Tensor<Scalar>(params.value(static_cast<int>(i)).shape);
    }
  }
};

/// One Adam update. Parameters with no accumulated gradient receive a zero
/// gradient, which leaves their values unchanged.
template <typename Scalar>
void adam_step(ParamStore<Scalar>& params, const GradientMap<Scalar>& grads,
               AdamState<Scalar>& state, const AdamConfig& cfg) {
  state.ensure(params);
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const Scalar lr = static_cast<Scalar>(cfg.lr);
  const Scalar b1 = static_cast<Scalar>(cfg.beta1);
  const Scalar b2 = static_cast<Scalar>(cfg.beta2);
  const Scalar eps = static_cast<Scalar>(cfg.eps);
  const Scalar ibc1 = static_cast<Scalar>(1.0 / bc1);
  const Scalar ibc2 = static_cast<Scalar>(1.0 / bc2);

  for (int p = 0; p < params.count(); ++p) {
    auto& value = params.value(p);
    auto& m = state.m[static_cast<std::size_t>(p)];
    auto& v = state.v[static_cast<std::size_t>(p)];
    const Tensor<Scalar>* g = nullptr;
    if (p < static_cast<int>(grads.grads.size()) &&
        !grads.grads[static_cast<std::size_t>(p)].shape.empty()) {
      g = &grads.grads[static_cast<std::size_t>(p)];
    }
    for (std::size_t i = 0; i < value.data.size(); ++i) {
      const Scalar gi = g ? g->data[i] : Scalar(0);
      m.data[i] = b1 * m.data[i] + (Scalar(1) - b1) * gi;
      v.data[i] = b2 * v.data[i] + (Scalar(1) - b2) * gi * gi;
      const Scalar mhat = m.data[i] * ibc1;
      const Scalar vhat = v.data[i] * ibc2;
      value.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

}  // namespace flowplan::ad

#endif  // FLOWPLAN_AD_ADAM_HPP
