#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "skewnet/nn/layer.hpp"

namespace skewnet::nn {

/// Denominator floor of the relative error, so gradients that are zero in
/// both routes compare as equal instead of 0/0.
inline constexpr double kGradCheckFloor = 1e-5;

struct GradReport {
  std::vector<std::pair<std::string, double>> per_parameter;
  double global_max = 0.0;
};

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
  return std::abs(analytic - numeric) / denom;
}

/// Compares analytic gradients with central finite differences.
///
/// `loss` must evaluate the objective deterministically from the current
/// parameter values (reseed any dropout stream inside it). `fill_gradients`
/// runs the forward/backward pass that writes Parameter::grad.
inline GradReport gradient_check(const std::vector<Parameter*>& params, const std::function<double()>& loss,
                                 const std::function<void()>& fill_gradients, double epsilon = 1e-5) {
  GradReport report;
  if (params.empty()) return report;
  fill_gradients();
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const Parameter* p : params) analytic.push_back(p->grad);

  for (std::size_t k = 0; k < params.size(); ++k) {
    auto w = params[k]->value.data();
    double worst = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double saved = w[i];
      w[i] = saved + epsilon;
      const double up = loss();
      w[i] = saved - epsilon;
      const double down = loss();
      w[i] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      worst = std::max(worst, relative_error(analytic[k][i], numeric));
    }
    report.per_parameter.emplace_back(params[k]->name, worst);
    report.global_max = std::max(report.global_max, worst);
  }
  return report;
}

}  // namespace skewnet::nn
