#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <string_view>

#include "skewnet/nn/layer.hpp"

namespace skewnet::nn {

enum class Activation { linear, relu, sigmoid, tanh, softmax };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
    case Activation::softmax: return "softmax";
  }
  return "linear";
}

inline Activation parse_activation(std::string_view s) {
  if (s == "linear") return Activation::linear;
  if (s == "relu") return Activation::relu;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "tanh") return Activation::tanh;
  if (s == "softmax") return Activation::softmax;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

inline double sigmoid(double x) noexcept {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Softmax over the last axis; max-shifted so large logits do not overflow.
inline void softmax_rows(std::span<double> values, std::size_t width) {
  for (std::size_t off = 0; off < values.size(); off += width) {
    double* r = values.data() + off;
    const double m = *std::max_element(r, r + width);
    double sum = 0.0;
    for (std::size_t j = 0; j < width; ++j) sum += (r[j] = std::exp(r[j] - m));
    for (std::size_t j = 0; j < width; ++j) r[j] /= sum;
  }
}

inline void activation_inplace(Tensor& t, Activation kind) {
  auto d = t.data();
  switch (kind) {
    case Activation::linear: break;
    case Activation::relu:
      for (double& v : d) v = v > 0.0 ? v : 0.0;
      break;
    case Activation::sigmoid:
      for (double& v : d) v = sigmoid(v);
      break;
    case Activation::tanh:
      for (double& v : d) v = std::tanh(v);
      break;
    case Activation::softmax:
      if (t.rank() == 0 || t.empty()) break;
      softmax_rows(d, t.shape().back());
      break;
  }
}

inline Tensor activation_apply(Tensor values, Activation kind) {
  activation_inplace(values, kind);
  return values;
}

/// Gradient with respect to the pre-activation given the activation output
/// and the gradient with respect to that output.
inline Tensor activation_backward(const Tensor& output, const Tensor& grad_output, Activation kind) {
  Tensor g = grad_output;
  auto gd = g.data();
  auto y = output.data();
  switch (kind) {
    case Activation::linear: break;
    case Activation::relu:
      for (std::size_t i = 0; i < gd.size(); ++i) if (!(y[i] > 0.0)) gd[i] = 0.0;
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < gd.size(); ++i) gd[i] *= y[i] * (1.0 - y[i]);
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < gd.size(); ++i) gd[i] *= 1.0 - y[i] * y[i];
      break;
    case Activation::softmax: {
      const std::size_t w = output.shape().back();
      for (std::size_t off = 0; off < gd.size(); off += w) {
        double dot = 0.0;
        for (std::size_t j = 0; j < w; ++j) dot += gd[off + j] * y[off + j];
        for (std::size_t j = 0; j < w; ++j) gd[off + j] = y[off + j] * (gd[off + j] - dot);
      }
      break;
    }
  }
  return g;
}

/// Stand-alone elementwise (or row-softmax) activation, used after conv layers.
class ActivationLayer final : public Layer {
 public:
  explicit ActivationLayer(Activation kind) : kind_(kind) {}

  std::string_view kind() const override { return "activation"; }
  Activation activation() const noexcept { return kind_; }

  Tensor forward(const Tensor& input, Mode, Rng&) override {
    output_ = activation_apply(input, kind_);
    cached_ = true;
    return output_;
  }
  Tensor backward(const Tensor& grad_output) override {
    detail::require_cache(cached_, output_.shape(), grad_output.shape(), "activation");
    return activation_backward(output_, grad_output, kind_);
  }
  Tensor infer(const Tensor& input) const override { return activation_apply(input, kind_); }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ActivationLayer>(kind_); }

 private:
  Activation kind_;
  Tensor output_;
  bool cached_ = false;
};

}  // namespace skewnet::nn
