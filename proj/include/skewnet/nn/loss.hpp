#pragma once

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "skewnet/tensor.hpp"

namespace skewnet {

/// Per-class positive loss multipliers, indexed by class id.
class ClassWeights {
 public:
  ClassWeights() = default;
  explicit ClassWeights(std::vector<double> weights) : weights_(std::move(weights)) {
    for (double w : weights_) {
      if (!std::isfinite(w) || w < 1.0) {
        throw ConfigError("class weights must be finite and >= 1, got " + std::to_string(w));
      }
    }
  }

  static ClassWeights unit(std::size_t n_classes) { return ClassWeights(std::vector<double>(n_classes, 1.0)); }

  /// Weights named by class; classes missing from the map get 1.
  static ClassWeights from_map(const std::vector<std::string>& class_names,
                               const std::map<std::string, double>& by_name) {
    std::vector<double> w(class_names.size(), 1.0);
    for (const auto& [name, value] : by_name) {
      auto it = std::find(class_names.begin(), class_names.end(), name);
      if (it == class_names.end()) throw ConfigError("class weight for unknown class '" + name + "'");
      w[static_cast<std::size_t>(it - class_names.begin())] = value;
    }
    return ClassWeights(std::move(w));
  }

  std::map<std::string, double> to_map(const std::vector<std::string>& class_names) const {
    std::map<std::string, double> m;
    for (std::size_t c = 0; c < weights_.size() && c < class_names.size(); ++c) m[class_names[c]] = weights_[c];
    return m;
  }

  std::size_t size() const noexcept { return weights_.size(); }
  double operator[](std::size_t c) const noexcept { return weights_[c]; }
  const std::vector<double>& values() const noexcept { return weights_; }
  bool is_unit() const noexcept {
    return std::all_of(weights_.begin(), weights_.end(), [](double w) { return w == 1.0; });
  }

  friend bool operator==(const ClassWeights&, const ClassWeights&) = default;

 private:
  std::vector<double> weights_;
};

namespace nn {

/// Probabilities are clipped to [kProbabilityClip, 1] before the logarithm.
inline constexpr double kProbabilityClip = 1e-12;

namespace detail {

inline void check_ce_inputs(const Tensor& probs, std::span<const int> targets, const ClassWeights* weights) {
  if (probs.rank() != 2) throw DimensionError("probabilities must be [N x C]");
  const std::size_t n = probs.dim(0), c = probs.dim(1);
  if (targets.size() != n) throw DimensionError("target count does not match probability rows");
  if (weights && weights->size() != c) throw DimensionError("class weight count does not match classes");
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= c) {
      throw IndexError("target index " + std::to_string(targets[i]) + " outside [0, " + std::to_string(c) + ")");
    }
    double s = 0.0;
    for (double p : probs.row(i)) s += p;
    if (std::abs(s - 1.0) > 1e-6) throw DataError("probability row " + std::to_string(i) + " does not sum to 1");
  }
}

}  // namespace detail

/// (1/N) * sum_i weight[y_i] * -log(clip(p_i[y_i])). A null `weights`
/// is the unweighted loss.
inline double weighted_cross_entropy(const Tensor& probs, std::span<const int> targets,
                                     const ClassWeights* weights = nullptr) {
  detail::check_ce_inputs(probs, targets, weights);
  const std::size_t n = probs.dim(0);
  if (n == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = static_cast<std::size_t>(targets[i]);
    double term = -std::log(std::max(probs.at(i, y), kProbabilityClip));
    if (weights) term *= (*weights)[y];
    total += term;
  }
  return total / static_cast<double>(n);
}

/// Gradient of weighted_cross_entropy with respect to the probabilities.
inline Tensor weighted_cross_entropy_grad(const Tensor& probs, std::span<const int> targets,
                                          const ClassWeights* weights = nullptr) {
  detail::check_ce_inputs(probs, targets, weights);
  const std::size_t n = probs.dim(0);
  Tensor g(probs.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = static_cast<std::size_t>(targets[i]);
    const double p = probs.at(i, y);
    if (p < kProbabilityClip) continue;
    double v = -1.0 / (p * static_cast<double>(n));
    if (weights) v *= (*weights)[y];
    g.at(i, y) = v;
  }
  return g;
}

/// Mean over every element of (prediction - target)^2.
inline double mean_squared_error(const Tensor& prediction, const Tensor& target) {
  if (prediction.shape() != target.shape()) {
    throw DimensionError("mse shapes differ: " + shape_string(prediction.shape()) + " vs " +
                         shape_string(target.shape()));
  }
  if (prediction.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const double d = prediction[i] - target[i];
    s += d * d;
  }
  return s / static_cast<double>(prediction.size());
}

inline Tensor mean_squared_error_grad(const Tensor& prediction, const Tensor& target) {
  Tensor g(prediction.shape());
  const double scale = 2.0 / static_cast<double>(prediction.size());
  for (std::size_t i = 0; i < prediction.size(); ++i) g[i] = scale * (prediction[i] - target[i]);
  return g;
}

}  // namespace nn
}  // namespace skewnet
