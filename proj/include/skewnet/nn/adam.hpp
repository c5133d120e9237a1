#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "skewnet/nn/layer.hpp"

namespace skewnet::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update over `params`. The moment buffers are
/// created on first use. A non-finite gradient anywhere aborts the whole
/// step before anything is modified. An identically zero gradient leaves
/// the parameters untouched (moments still decay and the step still counts).
inline void adam_step(std::span<Parameter* const> params, AdamState& state) {
  for (const Parameter* p : params) {
    if (p->grad.shape() != p->value.shape()) throw DimensionError("gradient shape mismatch for " + p->name);
    for (double g : p->grad.data()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter '" + p->name + "'");
    }
  }
  if (state.first_moment.empty()) {
    for (const Parameter* p : params) {
      state.first_moment.emplace_back(p->value.shape());
      state.second_moment.emplace_back(p->value.shape());
    }
  }
  if (state.first_moment.size() != params.size()) throw StateError("adam state does not match parameter list");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (state.first_moment[k].shape() != params[k]->value.shape()) {
      throw StateError("adam state shape mismatch for " + params[k]->name);
    }
  }

  bool all_zero = true;
  for (const Parameter* p : params) {
    for (double g : p->grad.data()) all_zero = all_zero && g == 0.0;
  }

  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto w = params[k]->value.data();
    auto g = params[k]->grad.data();
    auto m = state.first_moment[k].data();
    auto v = state.second_moment[k].data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      if (!all_zero) w[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

}  // namespace skewnet::nn
