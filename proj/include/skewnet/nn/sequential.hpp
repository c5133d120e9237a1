#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "skewnet/nn/layer.hpp"

namespace skewnet::nn {

/// Ordered layer stack with value semantics (copies deep-clone the layers).
class Sequential {
 public:
  Sequential() = default;
  Sequential(const Sequential& other) {
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
  }
  Sequential& operator=(const Sequential& other) {
    if (this != &other) *this = Sequential(other);
    return *this;
  }
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  template <class L, class... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }
  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

  std::size_t size() const noexcept { return layers_.size(); }
  Layer& operator[](std::size_t i) { return *layers_[i]; }
  const Layer& operator[](std::size_t i) const { return *layers_[i]; }

  Tensor forward(const Tensor& input, Mode mode, Rng& rng) {
    Tensor x = input;
    for (auto& l : layers_) x = l->forward(x, mode, rng);
    return x;
  }

  Tensor backward(const Tensor& grad_output) {
    Tensor g = grad_output;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
  }

  Tensor infer(const Tensor& input) const {
    Tensor x = input;
    for (const auto& l : layers_) x = l->infer(x);
    return x;
  }

  /// Parameters in layer order, named "<layer index>.<kind>.<name>".
  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> ps;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      for (Parameter* p : layers_[i]->parameters()) ps.push_back(p);
    }
    return ps;
  }

  std::vector<std::pair<std::string, Parameter*>> named_parameters(const std::string& prefix = "") {
    std::vector<std::pair<std::string, Parameter*>> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const std::string base = prefix + std::to_string(i) + "." + std::string(layers_[i]->kind()) + ".";
      for (Parameter* p : layers_[i]->parameters()) out.emplace_back(base + p->name, p);
    }
    return out;
  }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace skewnet::nn
