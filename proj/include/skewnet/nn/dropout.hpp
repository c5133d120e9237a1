#pragma once

#include <memory>

#include "skewnet/nn/layer.hpp"

namespace skewnet::nn {

/// Inverted dropout: in train mode each element is zeroed with probability
/// `rate` and survivors are scaled by 1/(1-rate); eval mode is the identity.
class Dropout final : public Layer {
 public:
  explicit Dropout(double rate) : rate_(rate) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
  }

  std::string_view kind() const override { return "dropout"; }
  double rate() const noexcept { return rate_; }

  Tensor forward(const Tensor& input, Mode mode, Rng& rng) override {
    cached_ = true;
    shape_ = input.shape();
    if (mode == Mode::eval || rate_ == 0.0) {
      mask_.clear();
      return input;
    }
    const double keep_scale = 1.0 / (1.0 - rate_);
    mask_.assign(input.size(), 0.0);
    Tensor out = input;
    auto d = out.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      mask_[i] = rng.uniform() >= rate_ ? keep_scale : 0.0;
      d[i] *= mask_[i];
    }
    return out;
  }

  Tensor backward(const Tensor& grad_output) override {
    detail::require_cache(cached_, shape_, grad_output.shape(), "dropout");
    if (mask_.empty()) return grad_output;
    Tensor g = grad_output;
    auto d = g.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= mask_[i];
    return g;
  }

  Tensor infer(const Tensor& input) const override { return input; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dropout>(rate_); }

 private:
  double rate_;
  std::vector<double> mask_;
  Shape shape_;
  bool cached_ = false;
};

inline Tensor dropout_apply(const Tensor& input, Dropout& layer, Mode mode, Rng& rng) {
  return layer.forward(input, mode, rng);
}

}  // namespace skewnet::nn
