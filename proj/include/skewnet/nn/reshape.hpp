#pragma once

#include <memory>

#include "skewnet/nn/layer.hpp"

namespace skewnet::nn {

/// Reinterprets each sample with a new per-sample shape; the batch axis is kept.
class Reshape final : public Layer {
 public:
  explicit Reshape(Shape sample_shape) : sample_shape_(std::move(sample_shape)) {}

  std::string_view kind() const override { return "reshape"; }

  Tensor forward(const Tensor& input, Mode, Rng&) override {
    in_shape_ = input.shape();
    Tensor y = infer(input);
    out_shape_ = y.shape();
    cached_ = true;
    return y;
  }
  Tensor backward(const Tensor& grad_output) override {
    detail::require_cache(cached_, out_shape_, grad_output.shape(), "reshape");
    return grad_output.reshaped(in_shape_);
  }
  Tensor infer(const Tensor& input) const override {
    if (input.rank() == 0) throw DimensionError("reshape needs a batch axis");
    Shape s{input.dim(0)};
    s.insert(s.end(), sample_shape_.begin(), sample_shape_.end());
    return input.reshaped(std::move(s));
  }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Reshape>(sample_shape_); }

 private:
  Shape sample_shape_;
  Shape in_shape_, out_shape_;
  bool cached_ = false;
};

/// [N x T x 2H] bidirectional sequence -> [N x 2H] summary: the forward
/// half at the last timestep and the reverse half at the first timestep,
/// i.e. the final state of each direction.
class FinalStates final : public Layer {
 public:
  explicit FinalStates(std::size_t hidden) : hidden_(hidden) {}

  std::string_view kind() const override { return "final_states"; }

  Tensor forward(const Tensor& input, Mode, Rng&) override {
    in_shape_ = input.shape();
    cached_ = true;
    return infer(input);
  }
  Tensor backward(const Tensor& grad_output) override {
    detail::require_cache(cached_, Shape{in_shape_.at(0), 2 * hidden_}, grad_output.shape(), "final_states");
    Tensor dx(in_shape_);
    const std::size_t n = in_shape_[0], steps = in_shape_[1], h = hidden_;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < h; ++j) {
        dx.at(i, steps - 1, j) = grad_output.at(i, j);
        dx.at(i, 0, h + j) += grad_output.at(i, h + j);
      }
    }
    return dx;
  }
  Tensor infer(const Tensor& input) const override {
    if (input.rank() != 3 || input.dim(2) != 2 * hidden_) {
      throw DimensionError("final_states expects [N x T x " + std::to_string(2 * hidden_) + "], got " +
                           shape_string(input.shape()));
    }
    const std::size_t n = input.dim(0), steps = input.dim(1), h = hidden_;
    Tensor y({n, 2 * h});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < h; ++j) {
        y.at(i, j) = input.at(i, steps - 1, j);
        y.at(i, h + j) = input.at(i, 0, h + j);
      }
    }
    return y;
  }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<FinalStates>(hidden_); }

 private:
  std::size_t hidden_;
  Shape in_shape_;
  bool cached_ = false;
};

}  // namespace skewnet::nn
