#pragma once

#include <cmath>
#include <memory>

#include "skewnet/nn/activation.hpp"

namespace skewnet::nn {

/// Uniform He (relu) or Glorot (everything else) initialization.
inline void init_uniform(Tensor& t, std::size_t fan_in, std::size_t fan_out, Activation act, Rng& rng) {
  const double limit = act == Activation::relu ? std::sqrt(6.0 / static_cast<double>(fan_in))
                                               : std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : t.data()) v = rng.uniform(-limit, limit);
}

/// y = activation(x W + b) applied row-wise to [N x in] inputs.
class Dense final : public Layer {
 public:
  Dense(std::size_t in, std::size_t out, Activation act = Activation::linear)
      : weights_("W", Tensor(validated_shape(in, out))), bias_("b", Tensor({out})), act_(act) {}

  Dense(std::size_t in, std::size_t out, Activation act, Rng& init) : Dense(in, out, act) {
    init_uniform(weights_.value, in, out, act, init);
  }

  /// Explicit weights [in x out] and bias [out].
  Dense(Tensor weights, Tensor bias, Activation act)
      : Dense(weights.rank() == 2 ? weights.dim(0) : 0, weights.rank() == 2 ? weights.dim(1) : 0, act) {
    if (bias.shape() != Shape{weights.dim(1)}) throw DimensionError("dense bias does not match weights");
    weights_.value = std::move(weights);
    bias_.value = std::move(bias);
  }

  std::string_view kind() const override { return "dense"; }
  std::size_t in_dim() const noexcept { return weights_.value.dim(0); }
  std::size_t out_dim() const noexcept { return weights_.value.dim(1); }
  Activation activation() const noexcept { return act_; }
  Parameter& weights() noexcept { return weights_; }
  Parameter& bias() noexcept { return bias_; }

  Tensor forward(const Tensor& input, Mode, Rng&) override {
    input_ = input;
    output_ = infer(input);
    cached_ = true;
    return output_;
  }

  Tensor backward(const Tensor& grad_output) override {
    detail::require_cache(cached_, output_.shape(), grad_output.shape(), "dense");
    const std::size_t n = input_.dim(0), in = in_dim(), out = out_dim();
    const Tensor dz = activation_backward(output_, grad_output, act_);
    weights_.grad.fill(0.0);
    matmul_at_b_acc(input_.data(), dz.data(), weights_.grad.data(), n, in, out);
    bias_.grad.fill(0.0);
    auto db = bias_.grad.data();
    for (std::size_t i = 0; i < n; ++i) {
      auto r = dz.row(i);
      for (std::size_t j = 0; j < out; ++j) db[j] += r[j];
    }
    Tensor dx({n, in});
    matmul_a_bt(dz.data(), weights_.value.data(), dx.data(), n, out, in);
    return dx;
  }

  Tensor infer(const Tensor& input) const override {
    if (input.rank() != 2 || input.dim(1) != in_dim()) {
      throw DimensionError("dense layer expects [N x " + std::to_string(in_dim()) + "], got " +
                           shape_string(input.shape()));
    }
    const std::size_t n = input.dim(0), out = out_dim();
    Tensor y({n, out});
    matmul(input.data(), weights_.value.data(), y.data(), n, in_dim(), out);
    const auto b = bias_.value.data();
    for (std::size_t i = 0; i < n; ++i) {
      auto r = y.row(i);
      for (std::size_t j = 0; j < out; ++j) r[j] += b[j];
    }
    activation_inplace(y, act_);
    return y;
  }

  std::unique_ptr<Layer> clone() const override {
    return std::make_unique<Dense>(weights_.value, bias_.value, act_);
  }

  std::vector<Parameter*> parameters() override { return {&weights_, &bias_}; }

 private:
  static Shape validated_shape(std::size_t in, std::size_t out) {
    if (in == 0 || out == 0) throw ConfigError("dense layer dimensions must be positive");
    return {in, out};
  }

  Parameter weights_;
  Parameter bias_;
  Activation act_;
  Tensor input_, output_;
  bool cached_ = false;
};

inline Tensor dense_forward(const Tensor& input, const Dense& layer) { return layer.infer(input); }

}  // namespace skewnet::nn
