#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "skewnet/nn.hpp"
#include "test_support.hpp"

using namespace skewnet;
using namespace skewnet::nn;
using skewnet::test::layer_grad_check;
using skewnet::test::random_tensor;

// ---------------------------------------------------------------- dense

TEST(Dense, IdentityWeightsLinearIsIdentity) {
  Dense layer(Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}), Tensor::vector({0, 0, 0}), Activation::linear);
  const Tensor x = Tensor::matrix({{0.5, -2, 3}, {1, 1, 1}});
  EXPECT_EQ(dense_forward(x, layer), x);
}

TEST(Dense, HandMatrixProduct) {
  Dense layer(Tensor::matrix({{1, 1}, {1, -1}}), Tensor::vector({0, 0}), Activation::linear);
  const Tensor y = dense_forward(Tensor::matrix({{1, 2}}), layer);
  EXPECT_EQ(y, Tensor::matrix({{3, -1}}));
}

TEST(Dense, ZeroWeightsGiveBiasPerRow) {
  Dense layer(Tensor({3, 2}), Tensor::vector({0.25, -4}), Activation::linear);
  const Tensor y = dense_forward(Tensor::matrix({{1, 2, 3}, {-7, 0, 9}}), layer);
  EXPECT_EQ(y, Tensor::matrix({{0.25, -4}, {0.25, -4}}));
}

TEST(Dense, WidthMismatchIsDimensionError) {
  Dense layer(3, 2);
  EXPECT_THROW(dense_forward(Tensor({4, 2}), layer), DimensionError);
}

TEST(Dense, BackwardWithoutForwardIsStateError) {
  Dense layer(3, 2);
  EXPECT_THROW(layer.backward(Tensor({1, 2})), StateError);
  Rng rng(1);
  layer.forward(Tensor({4, 3}), Mode::train, rng);
  EXPECT_THROW(layer.backward(Tensor({5, 2})), StateError);
}

// ---------------------------------------------------------------- activations

TEST(Activation, ReluClampsNegatives) {
  EXPECT_EQ(activation_apply(Tensor::vector({-1, 0, 2}), Activation::relu), Tensor::vector({0, 0, 2}));
}

TEST(Activation, SoftmaxUniformRow) {
  const Tensor p = activation_apply(Tensor({1, 4}), Activation::softmax);
  for (double v : p.data()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Activation, SoftmaxTwoClassHandValue) {
  const Tensor p = activation_apply(Tensor::matrix({{2, 0}}), Activation::softmax);
  EXPECT_NEAR(p[0], 0.8808, 1e-4);
  EXPECT_NEAR(p[1], 0.1192, 1e-4);
}

TEST(Activation, SoftmaxRowsArePositiveSumToOneAndShiftInvariant) {
  Rng rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.index(6), c = 2 + rng.index(7);
    const Tensor logits = random_tensor({n, c}, rng, -10, 10);
    const Tensor p = activation_apply(logits, Activation::softmax);
    Tensor shifted = logits;
    for (std::size_t i = 0; i < n; ++i) {
      const double k = rng.uniform(-50, 50);
      for (double& v : shifted.row(i)) v += k;
    }
    const Tensor q = activation_apply(shifted, Activation::softmax);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (double v : p.row(i)) {
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-6);
      auto rp = p.row(i), rq = q.row(i), rl = logits.row(i);
      const auto am = std::max_element(rl.begin(), rl.end()) - rl.begin();
      EXPECT_EQ(std::max_element(rp.begin(), rp.end()) - rp.begin(), am);
      EXPECT_EQ(std::max_element(rq.begin(), rq.end()) - rq.begin(), am);
    }
  }
}

// ---------------------------------------------------------------- conv1d

TEST(Conv1D, HandCrossCorrelation) {
  Conv1D layer(1, 1, 3);
  layer.kernels().value = Tensor({1, 1, 3}, {1, 0, -1});
  const Tensor y = conv1d_forward(Tensor({1, 1, 3}, {1, 2, 3}), layer);
  EXPECT_EQ(y, Tensor({1, 1, 1}, {-2}));
}

TEST(Conv1D, UnitKernelIsIdentity) {
  Conv1D layer(1, 1, 1);
  layer.kernels().value = Tensor({1, 1, 1}, {1});
  const Tensor x({2, 1, 5}, {1, 2, 3, 4, 5, -1, -2, -3, -4, -5});
  EXPECT_EQ(conv1d_forward(x, layer), x);
}

TEST(Conv1D, OutputLengths) {
  EXPECT_EQ(Conv1D(1, 1, 3).output_length(10), 8u);
  EXPECT_EQ(Conv1D(1, 1, 3, 2, Padding::valid).output_length(10), 4u);
  EXPECT_EQ(Conv1D(1, 1, 3, 2, Padding::same).output_length(10), 5u);
  EXPECT_EQ(Conv1D(1, 1, 3, 2, Padding::same).output_length(7), 4u);
  EXPECT_EQ(Conv1D(1, 1, 3, 1, Padding::same).output_length(7), 7u);
}

TEST(Conv1D, ValidPaddingShorterThanKernelIsDimensionError) {
  Conv1D layer(1, 1, 5);
  EXPECT_THROW(conv1d_forward(Tensor({1, 1, 4}), layer), DimensionError);
  EXPECT_THROW(Conv1D(1, 1, 0), ConfigError);
  EXPECT_THROW(Conv1D(1, 1, 3, 0), ConfigError);
}

TEST(Conv1D, SamePaddingPadsSymmetrically) {
  // L=5, k=3, stride 1: one zero on each side.
  Conv1D layer(1, 1, 3, 1, Padding::same);
  layer.kernels().value = Tensor({1, 1, 3}, {1, 1, 1});
  const Tensor y = conv1d_forward(Tensor({1, 1, 5}, {1, 2, 3, 4, 5}), layer);
  EXPECT_EQ(y, Tensor({1, 1, 5}, {3, 6, 9, 12, 9}));
}

// ---------------------------------------------------------------- lstm

TEST(Lstm, AllZeroParametersGiveZeroOutput) {
  Lstm layer(3, 6, Direction::bidirectional);
  Rng rng(3);
  const Tensor y = bilstm_forward(random_tensor({4, 5, 3}, rng), layer);
  ASSERT_EQ(y.shape(), (Shape{4, 5, 12}));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Lstm, BidirectionalShape) {
  Rng rng(9);
  Lstm layer(3, 6, Direction::bidirectional, rng);
  EXPECT_EQ(bilstm_forward(random_tensor({4, 5, 3}, rng), layer).shape(), (Shape{4, 5, 12}));
  EXPECT_THROW(bilstm_forward(Tensor({4, 5, 2}), layer), DimensionError);
}

TEST(Lstm, ReverseDirectionSeesFutureInputs) {
  Rng rng(10);
  Lstm layer(1, 2, Direction::bidirectional, rng);
  Tensor x = random_tensor({1, 4, 1}, rng);
  const Tensor a = layer.infer(x);
  x.at(0, 3, 0) += 1.0;
  const Tensor b = layer.infer(x);
  // Forward half at t=0 ignores a change at t=3; reverse half at t=0 does not.
  EXPECT_EQ(a.at(0, 0, 0), b.at(0, 0, 0));
  EXPECT_NE(a.at(0, 0, 2), b.at(0, 0, 2));
}

TEST(Lstm, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng(seed);
    Lstm layer(3, 4, Direction::bidirectional, rng);
    for (auto* p : layer.parameters())
      if (p->name.ends_with(".b")) p->value = random_tensor(p->value.shape(), rng, -0.5, 0.5);
    const auto report = layer_grad_check(layer, random_tensor({2, 4, 3}, rng), seed);
    EXPECT_LT(report.global_max, 1e-4) << "seed " << seed;
  }
}

TEST(Lstm, SingleTimestepLeavesRecurrentWeightsWithZeroGradient) {
  Rng rng(5);
  Lstm layer(2, 3, Direction::bidirectional, rng);
  Tensor x = random_tensor({3, 1, 2}, rng);
  layer.forward(x, Mode::train, rng);
  layer.backward(random_tensor({3, 1, 6}, rng));
  for (auto* p : layer.parameters()) {
    if (p->name.ends_with(".U")) {
      for (double g : p->grad.data()) EXPECT_EQ(g, 0.0) << p->name;
    }
  }
}

// ---------------------------------------------------------------- dropout

TEST(Dropout, ZeroRateTrainIsIdentity) {
  Dropout layer(0.0);
  Rng rng(1);
  const Tensor x = random_tensor({5, 7}, rng);
  EXPECT_EQ(dropout_apply(x, layer, Mode::train, rng), x);
}

TEST(Dropout, EvalModeIsBitIdentical) {
  Rng rng(2);
  for (double rate : {0.0, 0.2, 0.3, 0.5, 0.99}) {
    Dropout layer(rate);
    const Tensor x = random_tensor({16, 9}, rng, -1e6, 1e6);
    EXPECT_EQ(dropout_apply(x, layer, Mode::eval, rng), x);
    EXPECT_EQ(layer.infer(x), x);
  }
}

TEST(Dropout, RateOneIsConfigError) {
  EXPECT_THROW(Dropout(1.0), ConfigError);
  EXPECT_THROW(Dropout(-0.1), ConfigError);
}

TEST(Dropout, InvertedScalingPreservesMean) {
  Dropout layer(0.5);
  Rng rng(77);
  const Tensor x({100000}, 1.0);
  const Tensor y = dropout_apply(x, layer, Mode::train, rng);
  const double mean = std::accumulate(y.data().begin(), y.data().end(), 0.0) / 1e5;
  EXPECT_NEAR(mean, 1.0, 0.02);
  for (double v : y.data()) EXPECT_TRUE(v == 0.0 || v == 2.0);
}

// ---------------------------------------------------------------- loss

TEST(WeightedCrossEntropy, UniformRow) {
  const Tensor p({1, 4}, 0.25);
  const std::vector<int> y{0};
  EXPECT_NEAR(weighted_cross_entropy(p, y), std::log(4.0), 1e-12);
  EXPECT_NEAR(weighted_cross_entropy(p, y), 1.3863, 1e-4);
}

TEST(WeightedCrossEntropy, WeightedHandValue) {
  const Tensor p = Tensor::matrix({{0.5, 0.5}});
  const std::vector<int> y{0};
  const ClassWeights w({2.0, 1.0});
  EXPECT_NEAR(weighted_cross_entropy(p, y, &w), 2.0 * std::log(2.0), 1e-12);
}

TEST(WeightedCrossEntropy, UnitWeightsMatchUnweightedPath) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.index(32), c = 2 + rng.index(5);
    const Tensor p = activation_apply(random_tensor({n, c}, rng, -5, 5), Activation::softmax);
    std::vector<int> y(n);
    for (int& v : y) v = static_cast<int>(rng.index(c));
    const ClassWeights unit = ClassWeights::unit(c);
    EXPECT_NEAR(weighted_cross_entropy(p, y, &unit), weighted_cross_entropy(p, y), 1e-12);
  }
}

TEST(WeightedCrossEntropy, ClipsZeroProbability) {
  const Tensor p = Tensor::matrix({{0.0, 1.0}});
  const std::vector<int> y{0};
  EXPECT_NEAR(weighted_cross_entropy(p, y), -std::log(kProbabilityClip), 1e-9);
}

TEST(WeightedCrossEntropy, TargetOutOfRangeIsIndexError) {
  const Tensor p({1, 3}, 1.0 / 3.0);
  const std::vector<int> y{3};
  EXPECT_THROW(weighted_cross_entropy(p, y), IndexError);
}

TEST(ClassWeights, RejectsWeightsBelowOne) {
  EXPECT_THROW(ClassWeights({1.0, 0.5}), ConfigError);
  EXPECT_THROW(ClassWeights({1.0, std::nan("")}), ConfigError);
  EXPECT_NO_THROW(ClassWeights({1.0, 367.0}));
}

// ---------------------------------------------------------------- backward

namespace {

struct SoftmaxProbe {
  Dense layer;
  Tensor x;
  std::vector<int> y;
  ClassWeights weights;

  double loss() {
    Rng r(0);
    return weighted_cross_entropy(layer.forward(x, Mode::train, r), y, &weights);
  }
  void fill() {
    Rng r(0);
    const Tensor p = layer.forward(x, Mode::train, r);
    layer.backward(weighted_cross_entropy_grad(p, y, &weights));
  }
};

SoftmaxProbe make_softmax_probe(std::uint64_t seed, std::vector<double> weights) {
  Rng rng(seed);
  SoftmaxProbe probe{Dense(5, 3, Activation::softmax, rng), random_tensor({6, 5}, rng), {}, ClassWeights(weights)};
  for (int i = 0; i < 6; ++i) probe.y.push_back(i % 3);
  probe.layer.bias().value = random_tensor({3}, rng, -0.5, 0.5);
  return probe;
}

}  // namespace

TEST(Backward, DenseSoftmaxCrossEntropyMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto probe = make_softmax_probe(seed, {1.0, 2.0, 3.5});
    const auto report = gradient_check(
        probe.layer.parameters(), [&] { return probe.loss(); }, [&] { probe.fill(); }, 1e-5);
    EXPECT_LT(report.global_max, 1e-6) << "seed " << seed;
  }
}

TEST(Backward, ScalingClassWeightsScalesGradients) {
  auto base = make_softmax_probe(3, {1.0, 1.5, 2.0});
  base.fill();
  const Tensor g0 = base.layer.weights().grad;
  for (double c : {2.0, 4.0, 3.0}) {
    auto scaled = make_softmax_probe(3, {c * 1.0, c * 1.5, c * 2.0});
    scaled.fill();
    const Tensor& g = scaled.layer.weights().grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (c == 2.0 || c == 4.0) {
        EXPECT_EQ(g[i], c * g0[i]);  // powers of two scale exactly
      } else {
        EXPECT_NEAR(g[i], c * g0[i], 1e-12 * std::abs(c * g0[i]) + 1e-300);
      }
    }
  }
}

TEST(Backward, ZeroInputRowsGiveZeroWeightGradient) {
  Dense layer(3, 2, Activation::linear);
  Rng rng(1);
  layer.forward(Tensor({4, 3}), Mode::train, rng);
  layer.backward(random_tensor({4, 2}, rng));
  for (double g : layer.weights().grad.data()) EXPECT_EQ(g, 0.0);
}

// ---------------------------------------------------------------- adam

TEST(Adam, ZeroGradientIsFixedPoint) {
  Rng rng(4);
  Parameter p("w", random_tensor({3, 3}, rng));
  const Tensor before = p.value;
  std::vector<Parameter*> ps{&p};
  AdamState state;
  adam_step(ps, state);
  EXPECT_EQ(p.value, before);
  // Also after momentum has built up.
  p.grad = random_tensor({3, 3}, rng);
  adam_step(ps, state);
  const Tensor mid = p.value;
  p.grad.fill(0.0);
  adam_step(ps, state);
  EXPECT_EQ(p.value, mid);
  EXPECT_EQ(state.step, 3u);
}

TEST(Adam, FirstStepMovesByLearningRateTimesSign) {
  Parameter p("w", Tensor::vector({0.5, -0.25, 2.0}));
  p.grad = Tensor::vector({3.0, -0.02, 1e-3});
  std::vector<Parameter*> ps{&p};
  AdamState state;
  adam_step(ps, state);
  EXPECT_NEAR(p.value[0], 0.5 - 0.001, 1e-6);
  EXPECT_NEAR(p.value[1], -0.25 + 0.001, 1e-6);
  EXPECT_NEAR(p.value[2], 2.0 - 0.001, 1e-6);
}

TEST(Adam, ConstantPositiveGradientDecreasesStrictly) {
  Parameter p("w", Tensor::vector({1.0}));
  std::vector<Parameter*> ps{&p};
  AdamState state;
  double prev = p.value[0];
  for (int i = 0; i < 10; ++i) {
    p.grad = Tensor::vector({0.7});
    adam_step(ps, state);
    EXPECT_LT(p.value[0], prev);
    prev = p.value[0];
  }
}

TEST(Adam, NonFiniteGradientLeavesParametersUnchanged) {
  Parameter a("a", Tensor::vector({1.0, 2.0}));
  Parameter b("b", Tensor::vector({3.0}));
  a.grad = Tensor::vector({0.1, 0.2});
  b.grad = Tensor::vector({std::numeric_limits<double>::infinity()});
  std::vector<Parameter*> ps{&a, &b};
  AdamState state;
  EXPECT_THROW(adam_step(ps, state), NumericError);
  EXPECT_EQ(a.value, Tensor::vector({1.0, 2.0}));
  EXPECT_EQ(b.value, Tensor::vector({3.0}));
  EXPECT_EQ(state.step, 0u);
}

// ---------------------------------------------------------------- gradient_check

TEST(GradientCheck, NoParametersGivesEmptyReport) {
  const auto report = gradient_check({}, [] { return 0.0; }, [] {});
  EXPECT_TRUE(report.per_parameter.empty());
  EXPECT_EQ(report.global_max, 0.0);
}

TEST(GradientCheck, DetectsScaledGradient) {
  auto probe = make_softmax_probe(11, {1.0, 1.0, 1.0});
  const auto good = gradient_check(
      probe.layer.parameters(), [&] { return probe.loss(); }, [&] { probe.fill(); }, 1e-5);
  EXPECT_LT(good.global_max, 1e-4);
  const auto bad = gradient_check(
      probe.layer.parameters(), [&] { return probe.loss(); },
      [&] {
        probe.fill();
        for (auto* p : probe.layer.parameters())
          for (double& g : p->grad.data()) g *= 1.1;
      },
      1e-5);
  EXPECT_GT(bad.global_max, 1e-2);
}

TEST(GradientCheck, EveryLayerTypeAcrossSeeds) {
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    Rng rng(seed);
    Dense relu(4, 5, Activation::relu, rng);
    EXPECT_LT(layer_grad_check(relu, random_tensor({3, 4}, rng), seed).global_max, 1e-4) << "dense relu " << seed;
    Dense tanh_layer(4, 3, Activation::tanh, rng);
    EXPECT_LT(layer_grad_check(tanh_layer, random_tensor({3, 4}, rng), seed).global_max, 1e-4);
    Dense sig(4, 3, Activation::sigmoid, rng);
    EXPECT_LT(layer_grad_check(sig, random_tensor({3, 4}, rng), seed).global_max, 1e-4);
    Dense soft(4, 3, Activation::softmax, rng);
    EXPECT_LT(layer_grad_check(soft, random_tensor({3, 4}, rng), seed).global_max, 1e-4);
    Conv1D conv(2, 3, 3, 2, Padding::same, rng);
    EXPECT_LT(layer_grad_check(conv, random_tensor({2, 2, 7}, rng), seed).global_max, 1e-4) << "conv " << seed;
    Conv1D conv_valid(1, 2, 2, 1, Padding::valid, rng);
    EXPECT_LT(layer_grad_check(conv_valid, random_tensor({2, 1, 5}, rng), seed).global_max, 1e-4);
    Lstm fwd(2, 3, Direction::forward, rng);
    EXPECT_LT(layer_grad_check(fwd, random_tensor({2, 4, 2}, rng), seed).global_max, 1e-4) << "lstm " << seed;
    Lstm bi(2, 3, Direction::bidirectional, rng);
    EXPECT_LT(layer_grad_check(bi, random_tensor({2, 4, 2}, rng), seed).global_max, 1e-4) << "bilstm " << seed;
    Dropout drop_eval(0.3);
    EXPECT_LT(layer_grad_check(drop_eval, random_tensor({3, 4}, rng), seed, Mode::eval).global_max, 1e-4);
    Dropout drop_train(0.3);
    EXPECT_LT(layer_grad_check(drop_train, random_tensor({3, 4}, rng), seed, Mode::train).global_max, 1e-4);
    FinalStates fs(3);
    EXPECT_LT(layer_grad_check(fs, random_tensor({2, 4, 6}, rng), seed).global_max, 1e-4);
  }
}
