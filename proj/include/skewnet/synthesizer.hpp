#pragma once

#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "skewnet/checkpoint.hpp"
#include "skewnet/classifier.hpp"
#include "skewnet/dataset.hpp"
#include "skewnet/nn.hpp"

namespace skewnet {

/// Diagonal Gaussian q(z|x), one row per instance.
struct EncodedDistribution {
  Tensor mean;
  Tensor log_var;
};

struct ElboBreakdown {
  double reconstruction = 0.0;
  double kl = 0.0;
  double total = 0.0;
};

/// KL(N(mu, exp(lv)) || N(0, I)) summed over latent dims, averaged over rows.
inline double kl_divergence(const Tensor& mean, const Tensor& log_var) {
  if (mean.shape() != log_var.shape()) throw DimensionError("kl: mean and log-variance shapes differ");
  if (mean.size() == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    const double m = mean[i], lv = log_var[i];
    s += -0.5 * (1.0 + lv - m * m - std::exp(lv));
  }
  return s / static_cast<double>(mean.dim(0));
}

/// Negative ELBO split into its parts. The reconstruction term is the
/// per-instance sum of squared errors averaged over rows (MSE x d).
inline ElboBreakdown elbo_loss(const Tensor& x, const Tensor& reconstruction, const EncodedDistribution& dist) {
  if (x.shape() != reconstruction.shape()) {
    throw DimensionError("elbo: input " + shape_string(x.shape()) + " vs reconstruction " +
                         shape_string(reconstruction.shape()));
  }
  if (x.rank() != 2 || dist.mean.rank() != 2 || dist.mean.dim(0) != x.dim(0)) {
    throw DimensionError("elbo: expects [N x d] inputs and [N x z] latent parameters");
  }
  ElboBreakdown e;
  e.reconstruction = nn::mean_squared_error(reconstruction, x) * static_cast<double>(x.dim(1));
  e.kl = kl_divergence(dist.mean, dist.log_var);
  e.total = e.reconstruction + e.kl;
  return e;
}

/// z = mu + exp(lv / 2) * eps with caller-supplied noise.
inline Tensor reparameterize(const EncodedDistribution& dist, const Tensor& eps) {
  if (dist.mean.shape() != dist.log_var.shape() || eps.shape() != dist.mean.shape()) {
    throw DimensionError("reparameterize: shape mismatch");
  }
  Tensor z(dist.mean.shape());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = dist.mean[i] + std::exp(0.5 * dist.log_var[i]) * eps[i];
  return z;
}

inline Tensor standard_normal(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.normal();
  return t;
}

inline Tensor reparameterize(const EncodedDistribution& dist, Rng& rng) {
  return reparameterize(dist, standard_normal(dist.mean.shape(), rng));
}

// ------------------------------------------------------------------ model

struct VaeConfig {
  std::size_t z_dim = 4;
  std::size_t conv1_channels = 8;
  std::size_t conv2_channels = 16;
  std::size_t kernel = 3;
  std::size_t stride = 2;
  std::size_t decoder_hidden = 32;
  std::size_t epochs = 300;
  // Tiny classes fit in one batch, so epochs alone would mean very few
  // updates; training runs at least this many Adam steps.
  std::size_t min_updates = 3000;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::size_t min_rows = 16;
  std::uint64_t seed = 0;

  void validate() const {
    if (z_dim == 0 || conv1_channels == 0 || conv2_channels == 0 || kernel == 0 || stride == 0 || decoder_hidden == 0)
      throw ConfigError("VAE layer sizes must be positive");
    TrainConfig{epochs, batch_size, learning_rate, seed, true}.validate();
  }
};

/// Encoder: the feature vector as a 1-channel signal of length d through
/// two strided Conv1D+relu blocks, flattened into dense mean and
/// log-variance heads. Decoder: dense z -> hidden relu -> d sigmoid.
struct VaeModel {
  std::size_t input_dim = 0;
  VaeConfig config;
  nn::Sequential encoder;
  nn::Sequential mean_head;
  nn::Sequential log_var_head;
  nn::Sequential decoder;

  std::size_t z_dim() const noexcept { return config.z_dim; }

  std::vector<nn::Parameter*> parameters() {
    std::vector<nn::Parameter*> ps;
    for (auto* net : {&encoder, &mean_head, &log_var_head, &decoder})
      for (auto* p : net->parameters()) ps.push_back(p);
    return ps;
  }
};

inline VaeModel build_vae(std::size_t input_dim, const VaeConfig& config, std::uint64_t init_seed = 0) {
  using namespace nn;
  config.validate();
  if (input_dim == 0) throw ConfigError("VAE input width must be positive");
  Rng init(init_seed);
  VaeModel m;
  m.input_dim = input_dim;
  m.config = config;
  m.encoder.add<Reshape>(Shape{1, input_dim});
  auto& conv1 = m.encoder.add<Conv1D>(1, config.conv1_channels, config.kernel, config.stride, Padding::same, init);
  m.encoder.add<ActivationLayer>(Activation::relu);
  const std::size_t l1 = conv1.output_length(input_dim);
  auto& conv2 = m.encoder.add<Conv1D>(config.conv1_channels, config.conv2_channels, config.kernel, config.stride,
                                      Padding::same, init);
  m.encoder.add<ActivationLayer>(Activation::relu);
  const std::size_t flat = config.conv2_channels * conv2.output_length(l1);
  m.encoder.add<Reshape>(Shape{flat});
  m.mean_head.add<Dense>(flat, config.z_dim, Activation::linear, init);
  m.log_var_head.add<Dense>(flat, config.z_dim, Activation::linear, init);
  m.decoder.add<Dense>(config.z_dim, config.decoder_hidden, Activation::relu, init);
  m.decoder.add<Dense>(config.decoder_hidden, input_dim, Activation::sigmoid, init);
  return m;
}

inline EncodedDistribution vae_encode(const VaeModel& m, const Tensor& x) {
  if (x.rank() != 2 || x.dim(1) != m.input_dim) {
    throw DimensionError("VAE expects width " + std::to_string(m.input_dim) + ", got " + shape_string(x.shape()));
  }
  const Tensor h = m.encoder.infer(x);
  return {m.mean_head.infer(h), m.log_var_head.infer(h)};
}

inline Tensor vae_decode(const VaeModel& m, const Tensor& z) { return m.decoder.infer(z); }

/// Forward pass with the given noise; when `fill_gradients` is set the
/// gradients of the returned negative ELBO are written into the parameters.
inline ElboBreakdown vae_loss(VaeModel& m, const Tensor& x, const Tensor& eps, bool fill_gradients) {
  Rng unused(0);
  const Tensor h = m.encoder.forward(x, nn::Mode::train, unused);
  EncodedDistribution dist{m.mean_head.forward(h, nn::Mode::train, unused),
                           m.log_var_head.forward(h, nn::Mode::train, unused)};
  const Tensor z = reparameterize(dist, eps);
  const Tensor xr = m.decoder.forward(z, nn::Mode::train, unused);
  const ElboBreakdown e = elbo_loss(x, xr, dist);
  if (!fill_gradients) return e;

  const double n = static_cast<double>(x.dim(0));
  Tensor g_rec(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) g_rec[i] = 2.0 * (xr[i] - x[i]) / n;
  const Tensor g_z = m.decoder.backward(g_rec);
  Tensor g_mean(z.shape()), g_lv(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double sd = std::exp(0.5 * dist.log_var[i]);
    g_mean[i] = g_z[i] + dist.mean[i] / n;
    g_lv[i] = g_z[i] * eps[i] * 0.5 * sd + 0.5 * (sd * sd - 1.0) / n;
  }
  Tensor g_h = m.mean_head.backward(g_mean);
  const Tensor g_h2 = m.log_var_head.backward(g_lv);
  for (std::size_t i = 0; i < g_h.size(); ++i) g_h[i] += g_h2[i];
  m.encoder.backward(g_h);
  return e;
}

/// Adam on the negative ELBO over the rows of one class for
/// max(epochs, epochs needed to reach min_updates) passes.
inline VaeModel train_vae(const Tensor& rows, const VaeConfig& config, std::vector<double>* history = nullptr) {
  config.validate();
  if (rows.rank() != 2 || rows.dim(1) == 0) throw DimensionError("VAE training expects [M x d] rows");
  const std::size_t n = rows.dim(0);
  if (n < config.min_rows) {
    throw DataError("VAE needs at least " + std::to_string(config.min_rows) + " rows, got " + std::to_string(n));
  }
  for (double v : rows.data())
    if (!std::isfinite(v)) throw DataError("non-finite value in VAE training rows");

  VaeModel m = build_vae(rows.dim(1), config, derive_seed(config.seed, "vae/init"));
  Rng order(derive_seed(config.seed, "vae/order"));
  Rng noise(derive_seed(config.seed, "vae/noise"));
  nn::AdamState adam{{config.learning_rate}, {}, {}, 0};
  const auto params = m.parameters();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::size_t batches = (n + config.batch_size - 1) / config.batch_size;
  const std::size_t epochs = std::max(config.epochs, (config.min_updates + batches - 1) / batches);
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), order.engine());
    double sum = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(n, start + config.batch_size);
      const Tensor xb = detail::gather_rows(rows, std::span<const std::size_t>(idx.data() + start, end - start));
      const Tensor eps = standard_normal({end - start, config.z_dim}, noise);
      const ElboBreakdown e = vae_loss(m, xb, eps, true);
      if (!std::isfinite(e.total)) throw NumericError("VAE loss became non-finite at epoch " + std::to_string(epoch));
      sum += e.total * static_cast<double>(end - start);
      nn::adam_step(params, adam);
    }
    if (history) history->push_back(sum / static_cast<double>(n));
  }
  return m;
}

/// Decodes n draws z ~ N(0, I).
inline Tensor generate(const VaeModel& m, std::size_t n, Rng& rng) {
  if (n == 0) throw ConfigError("generate needs n >= 1");
  return vae_decode(m, standard_normal({n, m.z_dim()}, rng));
}

inline Checkpoint vae_checkpoint(VaeModel& m) {
  Checkpoint ck;
  const auto& c = m.config;
  ck.header = {{"kind", "VAE"},
               {"input_dim", std::to_string(m.input_dim)},
               {"z_dim", std::to_string(c.z_dim)},
               {"conv1_channels", std::to_string(c.conv1_channels)},
               {"conv2_channels", std::to_string(c.conv2_channels)},
               {"kernel", std::to_string(c.kernel)},
               {"stride", std::to_string(c.stride)},
               {"decoder_hidden", std::to_string(c.decoder_hidden)}};
  store_parameters(ck, m.encoder, "enc.");
  store_parameters(ck, m.mean_head, "mean.");
  store_parameters(ck, m.log_var_head, "logvar.");
  store_parameters(ck, m.decoder, "dec.");
  return ck;
}

inline VaeModel vae_from_checkpoint(const Checkpoint& ck) {
  if (ck.kind() != "VAE") throw DataError("checkpoint kind is '" + ck.kind() + "', expected VAE");
  VaeConfig c;
  c.z_dim = ck.get_size("z_dim");
  c.conv1_channels = ck.get_size("conv1_channels");
  c.conv2_channels = ck.get_size("conv2_channels");
  c.kernel = ck.get_size("kernel");
  c.stride = ck.get_size("stride");
  c.decoder_hidden = ck.get_size("decoder_hidden");
  VaeModel m = build_vae(ck.get_size("input_dim"), c);
  restore_parameters(ck, m.encoder, "enc.");
  restore_parameters(ck, m.mean_head, "mean.");
  restore_parameters(ck, m.log_var_head, "logvar.");
  restore_parameters(ck, m.decoder, "dec.");
  return m;
}

// ------------------------------------------------------------------ augmentation

/// Synthetic rows for one class; `requested` must stay strictly below the
/// class's original count.
struct AugmentationPlan {
  std::string class_name;
  std::size_t original_count = 0;
  std::size_t requested = 0;
};

inline void check_cap(const std::string& class_name, std::size_t original, std::size_t requested) {
  if (requested == 0) throw ConfigError("augmentation plan for '" + class_name + "' requests no rows");
  if (requested >= original) {
    throw CapViolationError("augmentation plan for '" + class_name + "' requests " + std::to_string(requested) +
                            " synthetic rows, but the class has only " + std::to_string(original) +
                            " originals (synthetic rows must stay fewer)");
  }
}

/// round-half-up(fraction * class_count), which must stay below class_count.
inline std::size_t plan_from_fraction(std::size_t class_count, double fraction) {
  if (!(fraction > 0.0) || !std::isfinite(fraction)) throw ConfigError("augmentation fraction must be in (0, 1)");
  if (fraction >= 1.0) {
    throw CapViolationError("augmentation fraction " + detail::format_double(fraction) +
                            " would make synthetic rows match or outnumber the originals");
  }
  const std::size_t n = detail::round_half_up(fraction * static_cast<double>(class_count));
  check_cap("fraction plan", class_count, n);
  return n;
}

/// Appends the planned synthetic rows after every original row. All plans
/// are checked against the actual class counts before anything is generated.
inline Dataset augment_dataset(const Dataset& ds, const std::vector<AugmentationPlan>& plans,
                               const std::map<std::string, VaeModel>& vaes, std::uint64_t seed) {
  for (const auto& p : plans) {
    const std::size_t actual = ds.count_of(p.class_name);
    check_cap(p.class_name, actual, p.requested);
    if (!vaes.contains(p.class_name)) throw ConfigError("no trained VAE for class '" + p.class_name + "'");
    if (vaes.at(p.class_name).input_dim != ds.width()) throw DimensionError("VAE width does not match dataset");
  }
  Dataset out = ds;
  for (const auto& p : plans) {
    Rng rng(derive_seed(seed, "generate/" + p.class_name));
    const Tensor rows = generate(vaes.at(p.class_name), p.requested, rng);
    Dataset extra;
    extra.class_names = ds.class_names;
    extra.feature_names = ds.feature_names;
    extra.features = rows;
    extra.labels.assign(p.requested, static_cast<int>(ds.class_index(p.class_name)));
    out = concat(out, extra);
  }
  return out;
}

}  // namespace skewnet
