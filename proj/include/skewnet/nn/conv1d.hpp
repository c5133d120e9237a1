#pragma once

#include <memory>

#include "skewnet/nn/dense.hpp"

namespace skewnet::nn {

enum class Padding { valid, same };

/// 1-D cross-correlation over [N x C_in x L] inputs.
///
/// "same" padding follows the usual convention: output length ceil(L/stride)
/// with the extra zero (when the total padding is odd) on the right.
class Conv1D final : public Layer {
 public:
  Conv1D(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_len, std::size_t stride = 1,
         Padding padding = Padding::valid)
      : kernels_("K", Tensor(validated_shape(in_channels, out_channels, kernel_len, stride))),
        bias_("b", Tensor({out_channels})),
        stride_(stride),
        padding_(padding) {}

  Conv1D(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_len, std::size_t stride,
         Padding padding, Rng& init)
      : Conv1D(in_channels, out_channels, kernel_len, stride, padding) {
    init_uniform(kernels_.value, in_channels * kernel_len, out_channels * kernel_len, Activation::relu, init);
  }

  std::string_view kind() const override { return "conv1d"; }
  std::size_t in_channels() const noexcept { return kernels_.value.dim(1); }
  std::size_t out_channels() const noexcept { return kernels_.value.dim(0); }
  std::size_t kernel_len() const noexcept { return kernels_.value.dim(2); }
  std::size_t stride() const noexcept { return stride_; }
  Padding padding() const noexcept { return padding_; }
  Parameter& kernels() noexcept { return kernels_; }
  Parameter& bias() noexcept { return bias_; }

  std::size_t output_length(std::size_t length) const {
    const std::size_t k = kernel_len();
    if (padding_ == Padding::same) return (length + stride_ - 1) / stride_;
    if (length < k) {
      throw DimensionError("conv1d valid padding needs length >= kernel (" + std::to_string(length) + " < " +
                           std::to_string(k) + ")");
    }
    return (length - k) / stride_ + 1;
  }

  Tensor forward(const Tensor& input, Mode, Rng&) override {
    input_ = input;
    Tensor y = infer(input);
    out_shape_ = y.shape();
    cached_ = true;
    return y;
  }

  Tensor infer(const Tensor& input) const override {
    check_input(input);
    const std::size_t n = input.dim(0), len = input.dim(2), lout = output_length(len);
    const std::size_t co = out_channels(), ci = in_channels(), k = kernel_len();
    const std::ptrdiff_t pad = pad_left(len);
    Tensor y({n, co, lout});
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t o = 0; o < co; ++o) {
        for (std::size_t t = 0; t < lout; ++t) {
          double acc = bias_.value[o];
          const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(t * stride_) - pad;
          for (std::size_t c = 0; c < ci; ++c) {
            for (std::size_t q = 0; q < k; ++q) {
              const std::ptrdiff_t pos = start + static_cast<std::ptrdiff_t>(q);
              if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(len)) continue;
              acc += kernels_.value.at(o, c, q) * input.at(s, c, static_cast<std::size_t>(pos));
            }
          }
          y.at(s, o, t) = acc;
        }
      }
    }
    return y;
  }

  Tensor backward(const Tensor& grad_output) override {
    detail::require_cache(cached_, out_shape_, grad_output.shape(), "conv1d");
    const std::size_t n = input_.dim(0), len = input_.dim(2), lout = out_shape_[2];
    const std::size_t co = out_channels(), ci = in_channels(), k = kernel_len();
    const std::ptrdiff_t pad = pad_left(len);
    kernels_.grad.fill(0.0);
    bias_.grad.fill(0.0);
    Tensor dx(input_.shape());
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t o = 0; o < co; ++o) {
        for (std::size_t t = 0; t < lout; ++t) {
          const double g = grad_output.at(s, o, t);
          bias_.grad[o] += g;
          const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(t * stride_) - pad;
          for (std::size_t c = 0; c < ci; ++c) {
            for (std::size_t q = 0; q < k; ++q) {
              const std::ptrdiff_t pos = start + static_cast<std::ptrdiff_t>(q);
              if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(len)) continue;
              const auto p = static_cast<std::size_t>(pos);
              kernels_.grad.at(o, c, q) += g * input_.at(s, c, p);
              dx.at(s, c, p) += g * kernels_.value.at(o, c, q);
            }
          }
        }
      }
    }
    return dx;
  }

  std::unique_ptr<Layer> clone() const override {
    auto c = std::make_unique<Conv1D>(in_channels(), out_channels(), kernel_len(), stride_, padding_);
    c->kernels_.value = kernels_.value;
    c->bias_.value = bias_.value;
    return c;
  }

  std::vector<Parameter*> parameters() override { return {&kernels_, &bias_}; }

 private:
  static Shape validated_shape(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_len,
                               std::size_t stride) {
    if (in_channels == 0 || out_channels == 0) throw ConfigError("conv1d channels must be positive");
    if (kernel_len == 0) throw ConfigError("conv1d kernel length must be >= 1");
    if (stride == 0) throw ConfigError("conv1d stride must be >= 1");
    return {out_channels, in_channels, kernel_len};
  }

  void check_input(const Tensor& input) const {
    if (input.rank() != 3 || input.dim(1) != in_channels()) {
      throw DimensionError("conv1d expects [N x " + std::to_string(in_channels()) + " x L], got " +
                           shape_string(input.shape()));
    }
  }

  std::ptrdiff_t pad_left(std::size_t len) const {
    if (padding_ == Padding::valid) return 0;
    const std::size_t lout = output_length(len);
    const std::size_t needed = (lout - 1) * stride_ + kernel_len();
    const std::size_t total = needed > len ? needed - len : 0;
    return static_cast<std::ptrdiff_t>(total / 2);
  }

  Parameter kernels_;
  Parameter bias_;
  std::size_t stride_;
  Padding padding_;
  Tensor input_;
  Shape out_shape_;
  bool cached_ = false;
};

inline Tensor conv1d_forward(const Tensor& input, const Conv1D& layer) { return layer.infer(input); }

}  // namespace skewnet::nn
