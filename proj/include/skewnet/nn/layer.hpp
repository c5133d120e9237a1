#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "skewnet/random.hpp"
#include "skewnet/tensor.hpp"

namespace skewnet::nn {

enum class Mode { train, eval };

/// A trainable tensor together with the gradient of the current loss.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
};

/// Base for every layer.
///
/// forward() caches whatever backward() needs and is single-writer;
/// infer() is const, keeps no state and may run concurrently on a frozen
/// layer. backward() overwrites (does not accumulate) parameter gradients
/// and returns the gradient with respect to the layer input.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string_view kind() const = 0;
  virtual Tensor forward(const Tensor& input, Mode mode, Rng& rng) = 0;
  virtual Tensor backward(const Tensor& grad_output) = 0;
  virtual Tensor infer(const Tensor& input) const = 0;
  virtual std::unique_ptr<Layer> clone() const = 0;

  virtual std::vector<Parameter*> parameters() { return {}; }
  std::vector<const Parameter*> parameters() const {
    auto ps = const_cast<Layer*>(this)->parameters();
    return {ps.begin(), ps.end()};
  }
};

namespace detail {

inline void require_cache(bool present, const Shape& cached, const Shape& got, std::string_view layer) {
  if (!present) throw StateError(std::string(layer) + ": backward called without a forward pass");
  if (cached != got) {
    throw StateError(std::string(layer) + ": gradient shape " + shape_string(got) +
                     " does not match cached output " + shape_string(cached));
  }
}

}  // namespace detail

}  // namespace skewnet::nn
