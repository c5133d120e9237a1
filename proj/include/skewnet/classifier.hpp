#pragma once

#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "skewnet/checkpoint.hpp"
#include "skewnet/dataset.hpp"
#include "skewnet/metrics.hpp"
#include "skewnet/nn.hpp"

namespace skewnet {

enum class ArchKind { dnn, blstm };

inline std::string to_string(ArchKind k) { return k == ArchKind::dnn ? "DNN" : "BLSTM"; }

inline ArchKind parse_arch_kind(std::string_view s) {
  if (s == "DNN" || s == "dnn") return ArchKind::dnn;
  if (s == "BLSTM" || s == "blstm") return ArchKind::blstm;
  throw ConfigError("unknown architecture '" + std::string(s) + "' (expected DNN or BLSTM)");
}

/// Four hidden layers with dropout after the third and fourth.
///
/// For BLSTM the first hidden layer is a bidirectional LSTM reading the
/// input vector as d timesteps of one feature; each direction gets
/// ceil(widths[0]/2) units so the concatenated state is about widths[0] wide.
struct ArchitectureSpec {
  ArchKind kind = ArchKind::dnn;
  std::size_t input_dim = 0;
  std::size_t n_classes = 0;
  std::array<std::size_t, 4> widths{128, 64, 32, 16};
  double dropout_after_3 = 0.30;
  double dropout_after_4 = 0.20;

  std::size_t lstm_hidden() const { return (widths[0] + 1) / 2; }

  void validate() const {
    if (input_dim == 0) throw ConfigError("classifier input_dim must be positive");
    if (n_classes < 2) throw ConfigError("classifier needs at least 2 classes");
    for (std::size_t w : widths)
      if (w == 0) throw ConfigError("classifier hidden widths must be positive");
    for (double r : {dropout_after_3, dropout_after_4})
      if (!(r >= 0.0 && r < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
  }

  std::map<std::string, std::string> to_header() const {
    std::map<std::string, std::string> h;
    h["kind"] = to_string(kind);
    h["input_dim"] = std::to_string(input_dim);
    h["n_classes"] = std::to_string(n_classes);
    for (std::size_t i = 0; i < 4; ++i) h["width." + std::to_string(i)] = std::to_string(widths[i]);
    h["dropout.3"] = detail::format_double(dropout_after_3);
    h["dropout.4"] = detail::format_double(dropout_after_4);
    return h;
  }

  static ArchitectureSpec from_checkpoint(const Checkpoint& ck) {
    ArchitectureSpec s;
    s.kind = parse_arch_kind(ck.kind());
    s.input_dim = ck.get_size("input_dim");
    s.n_classes = ck.get_size("n_classes");
    for (std::size_t i = 0; i < 4; ++i) s.widths[i] = ck.get_size("width." + std::to_string(i));
    const auto r3 = detail::parse_double(ck.get("dropout.3")), r4 = detail::parse_double(ck.get("dropout.4"));
    if (!r3 || !r4) throw DataError("checkpoint dropout rates are not numbers");
    s.dropout_after_3 = *r3;
    s.dropout_after_4 = *r4;
    s.validate();
    return s;
  }

  bool operator==(const ArchitectureSpec&) const = default;
};

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 256;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  bool shuffle = true;

  void validate() const {
    if (epochs == 0) throw ConfigError("epochs must be >= 1");
    if (batch_size == 0) throw ConfigError("batch size must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be positive");
  }
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
};

struct ClassifierModel {
  ArchitectureSpec spec;
  std::vector<std::string> class_names;
  nn::Sequential net;
};

inline ClassifierModel build_classifier(const ArchitectureSpec& spec, std::uint64_t init_seed = 0) {
  using namespace nn;
  spec.validate();
  Rng init(init_seed);
  ClassifierModel m;
  m.spec = spec;
  for (std::size_t c = 0; c < spec.n_classes; ++c) m.class_names.push_back("class" + std::to_string(c));
  const auto& w = spec.widths;
  std::size_t width = 0;
  if (spec.kind == ArchKind::dnn) {
    m.net.add<Dense>(spec.input_dim, w[0], Activation::relu, init);
    width = w[0];
  } else {
    const std::size_t h = spec.lstm_hidden();
    m.net.add<Reshape>(Shape{spec.input_dim, 1});
    m.net.add<Lstm>(1, h, Direction::bidirectional, init);
    m.net.add<FinalStates>(h);
    width = 2 * h;
  }
  m.net.add<Dense>(width, w[1], Activation::relu, init);
  m.net.add<Dense>(w[1], w[2], Activation::relu, init);
  m.net.add<Dropout>(spec.dropout_after_3);
  m.net.add<Dense>(w[2], w[3], Activation::relu, init);
  m.net.add<Dropout>(spec.dropout_after_4);
  m.net.add<Dense>(w[3], spec.n_classes, Activation::softmax, init);
  return m;
}

namespace detail {

inline void check_training_data(const ClassifierModel& model, const Tensor& x, std::span<const int> y) {
  if (x.rank() != 2 || x.dim(1) != model.spec.input_dim) {
    throw DimensionError("classifier expects width " + std::to_string(model.spec.input_dim) + ", got " +
                         shape_string(x.shape()));
  }
  if (y.size() != x.dim(0)) throw DataError("feature and label counts differ");
  for (int v : y) {
    if (v < 0 || static_cast<std::size_t>(v) >= model.spec.n_classes)
      throw DataError("label " + std::to_string(v) + " out of range");
  }
  for (double v : x.data())
    if (!std::isfinite(v)) throw DataError("non-finite feature in training data");
}

inline Tensor gather_rows(const Tensor& x, std::span<const std::size_t> idx) {
  const std::size_t w = x.row_width();
  Tensor out({idx.size(), w});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    auto src = x.row(idx[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace detail

/// Minibatch Adam on the (optionally weighted) cross-entropy. A null
/// `weights` uses the unweighted loss.
inline TrainHistory train_classifier(ClassifierModel& model, const Dataset& train, const ClassWeights* weights,
                                     const TrainConfig& config, const Dataset* validation = nullptr) {
  config.validate();
  detail::check_training_data(model, train.features, train.labels);
  if (weights && weights->size() != model.spec.n_classes) throw ConfigError("class weight count does not match model");
  const std::size_t n = train.rows();
  if (n == 0) throw DataError("empty training set");
  if (train.class_names.size() == model.spec.n_classes) model.class_names = train.class_names;

  Rng order(derive_seed(config.seed, "train/order"));
  Rng noise(derive_seed(config.seed, "train/dropout"));
  nn::AdamState adam{{config.learning_rate}, {}, {}, 0};
  const auto params = model.net.parameters();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<int> yb;
  TrainHistory history;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.shuffle) std::shuffle(idx.begin(), idx.end(), order.engine());
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(n, start + config.batch_size);
      const std::span<const std::size_t> batch(idx.data() + start, end - start);
      const Tensor xb = detail::gather_rows(train.features, batch);
      yb.resize(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) yb[i] = train.labels[batch[i]];
      const Tensor probs = model.net.forward(xb, nn::Mode::train, noise);
      const double loss = nn::weighted_cross_entropy(probs, yb, weights);
      if (!std::isfinite(loss)) throw NumericError("classifier loss became non-finite at epoch " + std::to_string(epoch));
      loss_sum += loss * static_cast<double>(batch.size());
      model.net.backward(nn::weighted_cross_entropy_grad(probs, yb, weights));
      nn::adam_step(params, adam);
    }
    history.train_loss.push_back(loss_sum / static_cast<double>(n));
    if (validation) {
      const Tensor p = model.net.infer(validation->features);
      history.validation_loss.push_back(nn::weighted_cross_entropy(p, validation->labels, weights));
    }
  }
  return history;
}

inline TrainHistory train_classifier(ClassifierModel& model, const Dataset& train, const ClassWeights& weights,
                                     const TrainConfig& config, const Dataset* validation = nullptr) {
  return train_classifier(model, train, &weights, config, validation);
}

struct Prediction {
  Tensor probabilities;
  std::vector<int> labels;
};

/// Eval-mode forward pass in chunks; labels are the row-wise argmax.
inline Prediction predict(const ClassifierModel& model, const Tensor& features) {
  if (features.rank() != 2 || features.dim(1) != model.spec.input_dim) {
    throw DimensionError("classifier expects width " + std::to_string(model.spec.input_dim) + ", got " +
                         shape_string(features.shape()));
  }
  const std::size_t n = features.dim(0), c = model.spec.n_classes, chunk = 4096;
  Prediction out{Tensor({n, c}), std::vector<int>(n)};
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t end = std::min(n, start + chunk);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor p = model.net.infer(detail::gather_rows(features, idx));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      auto src = p.row(i);
      std::copy(src.begin(), src.end(), out.probabilities.row(start + i).begin());
      out.labels[start + i] = static_cast<int>(std::max_element(src.begin(), src.end()) - src.begin());
    }
  }
  return out;
}

inline MetricsReport evaluate_classifier(const ClassifierModel& model, const Dataset& test) {
  const Prediction p = predict(model, test.features);
  return evaluate_predictions(test.labels, p.labels, test.class_names);
}

inline Checkpoint classifier_checkpoint(ClassifierModel& model) {
  Checkpoint ck;
  ck.header = model.spec.to_header();
  for (std::size_t c = 0; c < model.class_names.size(); ++c)
    ck.header["class." + std::to_string(c)] = model.class_names[c];
  store_parameters(ck, model.net);
  return ck;
}

inline ClassifierModel classifier_from_checkpoint(const Checkpoint& ck) {
  const auto spec = ArchitectureSpec::from_checkpoint(ck);
  ClassifierModel m = build_classifier(spec);
  for (std::size_t c = 0; c < spec.n_classes; ++c) m.class_names[c] = ck.get("class." + std::to_string(c));
  restore_parameters(ck, m.net);
  return m;
}

}  // namespace skewnet
