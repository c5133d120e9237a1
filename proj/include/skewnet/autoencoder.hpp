#pragma once

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "skewnet/checkpoint.hpp"
#include "skewnet/classifier.hpp"
#include "skewnet/nn.hpp"

namespace skewnet {

struct ProjectorConfig {
  std::size_t latent_dim = 8;
  std::vector<std::size_t> hidden{64};
  std::size_t epochs = 20;
  std::size_t batch_size = 256;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;

  void validate() const {
    if (latent_dim == 0) throw ConfigError("latent_dim must be positive");
    for (std::size_t h : hidden)
      if (h == 0) throw ConfigError("autoencoder hidden widths must be positive");
    TrainConfig{epochs, batch_size, learning_rate, seed, true}.validate();
  }
};

/// Dense encoder [d -> hidden... -> latent] (relu hidden, linear latent)
/// and mirrored decoder [latent -> reversed hidden... -> d] (linear output).
struct AutoencoderModel {
  std::size_t input_dim = 0;
  std::size_t latent_dim = 0;
  std::vector<std::size_t> hidden;
  nn::Sequential encoder;
  nn::Sequential decoder;
};

inline AutoencoderModel build_autoencoder(std::size_t input_dim, std::size_t latent_dim,
                                          const std::vector<std::size_t>& hidden, std::uint64_t init_seed = 0) {
  using namespace nn;
  if (input_dim == 0 || latent_dim == 0) throw ConfigError("autoencoder dimensions must be positive");
  Rng init(init_seed);
  AutoencoderModel m{input_dim, latent_dim, hidden, {}, {}};
  std::size_t width = input_dim;
  for (std::size_t h : hidden) {
    m.encoder.add<Dense>(width, h, Activation::relu, init);
    width = h;
  }
  m.encoder.add<Dense>(width, latent_dim, Activation::linear, init);
  width = latent_dim;
  for (auto it = hidden.rbegin(); it != hidden.rend(); ++it) {
    m.decoder.add<Dense>(width, *it, Activation::relu, init);
    width = *it;
  }
  m.decoder.add<Dense>(width, input_dim, Activation::linear, init);
  return m;
}

namespace detail {

inline void check_width(const AutoencoderModel& m, const Tensor& x) {
  if (x.rank() != 2 || x.dim(1) != m.input_dim) {
    throw DimensionError("autoencoder expects width " + std::to_string(m.input_dim) + ", got " +
                         shape_string(x.shape()));
  }
}

inline Tensor chunked_infer(const nn::Sequential& net, const Tensor& x, std::size_t out_width) {
  const std::size_t n = x.dim(0), chunk = 4096;
  Tensor out({n, out_width});
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += chunk) {
    idx.resize(std::min(n, start + chunk) - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor y = net.infer(gather_rows(x, idx));
    std::copy(y.data().begin(), y.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(start * out_width));
  }
  return out;
}

}  // namespace detail

inline Tensor encode(const AutoencoderModel& m, const Tensor& features) {
  detail::check_width(m, features);
  return detail::chunked_infer(m.encoder, features, m.latent_dim);
}

inline Tensor reconstruct(const AutoencoderModel& m, const Tensor& features) {
  return detail::chunked_infer(m.decoder, encode(m, features), m.input_dim);
}

inline double reconstruction_error(const AutoencoderModel& m, const Tensor& features) {
  return nn::mean_squared_error(reconstruct(m, features), features);
}

inline Dataset encode_dataset(const AutoencoderModel& m, const Dataset& ds) {
  return ds.with_features(encode(m, ds.features));
}

/// Minibatch Adam on mean squared reconstruction error. Per-epoch mean
/// training loss goes to `history` when given.
inline AutoencoderModel train_autoencoder(const Tensor& features, const ProjectorConfig& config,
                                          std::vector<double>* history = nullptr) {
  config.validate();
  if (features.rank() != 2) throw DimensionError("autoencoder training expects [N x d] features");
  const std::size_t n = features.dim(0), d = features.dim(1);
  if (config.latent_dim >= d) {
    throw ConfigError("latent_dim " + std::to_string(config.latent_dim) + " must be below input width " +
                      std::to_string(d));
  }
  if (n < config.batch_size) {
    throw DataError("autoencoder needs at least batch_size (" + std::to_string(config.batch_size) + ") rows, got " +
                    std::to_string(n));
  }
  for (double v : features.data())
    if (!std::isfinite(v)) throw DataError("non-finite value in autoencoder training data");

  AutoencoderModel m = build_autoencoder(d, config.latent_dim, config.hidden, derive_seed(config.seed, "ae/init"));
  Rng order(derive_seed(config.seed, "ae/order"));
  nn::AdamState adam{{config.learning_rate}, {}, {}, 0};
  std::vector<nn::Parameter*> params = m.encoder.parameters();
  for (auto* p : m.decoder.parameters()) params.push_back(p);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), order.engine());
    double sum = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(n, start + config.batch_size);
      const Tensor xb = detail::gather_rows(features, std::span<const std::size_t>(idx.data() + start, end - start));
      const Tensor z = m.encoder.forward(xb, nn::Mode::train, order);
      const Tensor y = m.decoder.forward(z, nn::Mode::train, order);
      const double loss = nn::mean_squared_error(y, xb);
      if (!std::isfinite(loss)) throw NumericError("autoencoder loss became non-finite");
      sum += loss * static_cast<double>(end - start);
      m.encoder.backward(m.decoder.backward(nn::mean_squared_error_grad(y, xb)));
      nn::adam_step(params, adam);
    }
    if (history) history->push_back(sum / static_cast<double>(n));
  }
  return m;
}

inline Checkpoint autoencoder_checkpoint(AutoencoderModel& m) {
  Checkpoint ck;
  ck.header["kind"] = "AE";
  ck.header["input_dim"] = std::to_string(m.input_dim);
  ck.header["latent_dim"] = std::to_string(m.latent_dim);
  ck.header["hidden.count"] = std::to_string(m.hidden.size());
  for (std::size_t i = 0; i < m.hidden.size(); ++i) ck.header["hidden." + std::to_string(i)] = std::to_string(m.hidden[i]);
  store_parameters(ck, m.encoder, "enc.");
  store_parameters(ck, m.decoder, "dec.");
  return ck;
}

inline AutoencoderModel autoencoder_from_checkpoint(const Checkpoint& ck) {
  if (ck.kind() != "AE") throw DataError("checkpoint kind is '" + ck.kind() + "', expected AE");
  std::vector<std::size_t> hidden(ck.get_size("hidden.count"));
  for (std::size_t i = 0; i < hidden.size(); ++i) hidden[i] = ck.get_size("hidden." + std::to_string(i));
  AutoencoderModel m = build_autoencoder(ck.get_size("input_dim"), ck.get_size("latent_dim"), hidden);
  restore_parameters(ck, m.encoder, "enc.");
  restore_parameters(ck, m.decoder, "dec.");
  return m;
}

}  // namespace skewnet
