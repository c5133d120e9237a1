#pragma once

#include <array>
#include <cmath>
#include <memory>

#include "skewnet/nn/dense.hpp"

namespace skewnet::nn {

enum class Direction { forward, bidirectional };

/// LSTM over [N x T x F] sequences with zero initial hidden and cell state.
///
/// Each direction owns W [F x 4H], U [H x 4H] and b [4H], with the four
/// gate blocks laid out as (input, forget, cell candidate, output):
///
///   a_t = x_t W + h_{t-1} U + b
///   i = sigmoid(a_i), f = sigmoid(a_f), g = tanh(a_g), o = sigmoid(a_o)
///   c_t = f * c_{t-1} + i * g,  h_t = o * tanh(c_t)
///
/// Output is [N x T x H] forward-only, or [N x T x 2H] with the forward
/// states in the first H columns and the reverse-time states in the last H.
class Lstm final : public Layer {
 public:
  Lstm(std::size_t features, std::size_t hidden, Direction dir = Direction::bidirectional)
      : features_(features), hidden_(hidden), dir_(dir) {
    if (features == 0 || hidden == 0) throw ConfigError("lstm sizes must be positive");
    for (std::size_t d = 0; d < directions(); ++d) {
      const std::string p = d == 0 ? "fwd." : "bwd.";
      cells_[d].w = Parameter(p + "W", Tensor({features, 4 * hidden}));
      cells_[d].u = Parameter(p + "U", Tensor({hidden, 4 * hidden}));
      cells_[d].b = Parameter(p + "b", Tensor({4 * hidden}));
    }
  }

  Lstm(std::size_t features, std::size_t hidden, Direction dir, Rng& init) : Lstm(features, hidden, dir) {
    for (std::size_t d = 0; d < directions(); ++d) {
      init_uniform(cells_[d].w.value, features, 4 * hidden, Activation::tanh, init);
      init_uniform(cells_[d].u.value, hidden, 4 * hidden, Activation::tanh, init);
    }
  }

  std::string_view kind() const override { return dir_ == Direction::bidirectional ? "bilstm" : "lstm"; }
  std::size_t features() const noexcept { return features_; }
  std::size_t hidden() const noexcept { return hidden_; }
  Direction direction() const noexcept { return dir_; }
  std::size_t directions() const noexcept { return dir_ == Direction::bidirectional ? 2 : 1; }
  std::size_t output_width() const noexcept { return directions() * hidden_; }

  Tensor forward(const Tensor& input, Mode, Rng&) override {
    check_input(input);
    input_ = input;
    Tensor out({input.dim(0), input.dim(1), output_width()});
    for (std::size_t d = 0; d < directions(); ++d) run_direction(d, input, out, &traces_[d]);
    out_shape_ = out.shape();
    cached_ = true;
    return out;
  }

  Tensor infer(const Tensor& input) const override {
    check_input(input);
    Tensor out({input.dim(0), input.dim(1), output_width()});
    for (std::size_t d = 0; d < directions(); ++d) run_direction(d, input, out, nullptr);
    return out;
  }

  Tensor backward(const Tensor& grad_output) override {
    detail::require_cache(cached_, out_shape_, grad_output.shape(), kind());
    Tensor dx(input_.shape());
    for (std::size_t d = 0; d < directions(); ++d) backprop_direction(d, grad_output, dx);
    return dx;
  }

  std::unique_ptr<Layer> clone() const override {
    auto c = std::make_unique<Lstm>(features_, hidden_, dir_);
    for (std::size_t d = 0; d < directions(); ++d) {
      c->cells_[d].w.value = cells_[d].w.value;
      c->cells_[d].u.value = cells_[d].u.value;
      c->cells_[d].b.value = cells_[d].b.value;
    }
    return c;
  }

  std::vector<Parameter*> parameters() override {
    std::vector<Parameter*> ps;
    for (std::size_t d = 0; d < directions(); ++d) {
      ps.push_back(&cells_[d].w);
      ps.push_back(&cells_[d].u);
      ps.push_back(&cells_[d].b);
    }
    return ps;
  }

 private:
  struct Cell {
    Parameter w, u, b;
  };

  // Per-timestep activations kept for backpropagation through time, in
  // processing order (step s is timestep T-1-s for the reverse direction).
  struct Trace {
    std::vector<Tensor> x, gates, c, tanh_c, h;
  };

  void check_input(const Tensor& input) const {
    if (input.rank() != 3 || input.dim(2) != features_) {
      throw DimensionError("lstm expects [N x T x " + std::to_string(features_) + "], got " +
                           shape_string(input.shape()));
    }
  }

  std::size_t timestep(std::size_t d, std::size_t step, std::size_t steps) const noexcept {
    return d == 0 ? step : steps - 1 - step;
  }

  void run_direction(std::size_t d, const Tensor& input, Tensor& out, Trace* trace) const {
    const std::size_t n = input.dim(0), steps = input.dim(1), f = features_, h = hidden_, g4 = 4 * h;
    const Cell& cell = cells_[d];
    Tensor h_prev({n, h}), c_prev({n, h});
    if (trace) *trace = Trace{};
    for (std::size_t s = 0; s < steps; ++s) {
      const std::size_t t = timestep(d, s, steps);
      Tensor xt({n, f});
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < f; ++j) xt.at(i, j) = input.at(i, t, j);

      Tensor a({n, g4});
      matmul(xt.data(), cell.w.value.data(), a.data(), n, f, g4);
      Tensor rec({n, g4});
      matmul(h_prev.data(), cell.u.value.data(), rec.data(), n, h, g4);
      Tensor c({n, h}), tc({n, h}), hh({n, h});
      for (std::size_t i = 0; i < n; ++i) {
        double* ai = a.row(i).data();
        const double* ri = rec.row(i).data();
        for (std::size_t j = 0; j < g4; ++j) ai[j] += ri[j] + cell.b.value[j];
        for (std::size_t j = 0; j < h; ++j) {
          ai[j] = sigmoid(ai[j]);
          ai[h + j] = sigmoid(ai[h + j]);
          ai[2 * h + j] = std::tanh(ai[2 * h + j]);
          ai[3 * h + j] = sigmoid(ai[3 * h + j]);
          c.at(i, j) = ai[h + j] * c_prev.at(i, j) + ai[j] * ai[2 * h + j];
          tc.at(i, j) = std::tanh(c.at(i, j));
          hh.at(i, j) = ai[3 * h + j] * tc.at(i, j);
          out.at(i, t, d * h + j) = hh.at(i, j);
        }
      }
      if (trace) {
        trace->x.push_back(std::move(xt));
        trace->gates.push_back(a);
        trace->c.push_back(c);
        trace->tanh_c.push_back(tc);
        trace->h.push_back(hh);
      }
      h_prev = std::move(hh);
      c_prev = std::move(c);
    }
  }

  void backprop_direction(std::size_t d, const Tensor& grad_output, Tensor& dx) {
    const std::size_t n = input_.dim(0), steps = input_.dim(1), f = features_, h = hidden_, g4 = 4 * h;
    Cell& cell = cells_[d];
    const Trace& tr = traces_[d];
    cell.w.grad.fill(0.0);
    cell.u.grad.fill(0.0);
    cell.b.grad.fill(0.0);
    Tensor dh_next({n, h}), dc_next({n, h});
    const Tensor zeros({n, h});
    for (std::size_t s = steps; s-- > 0;) {
      const std::size_t t = timestep(d, s, steps);
      const Tensor& gates = tr.gates[s];
      const Tensor& c_prev = s > 0 ? tr.c[s - 1] : zeros;
      const Tensor& h_prev = s > 0 ? tr.h[s - 1] : zeros;
      Tensor da({n, g4});
      for (std::size_t i = 0; i < n; ++i) {
        const double* gi = gates.row(i).data();
        double* dai = da.row(i).data();
        for (std::size_t j = 0; j < h; ++j) {
          const double ig = gi[j], fg = gi[h + j], gg = gi[2 * h + j], og = gi[3 * h + j];
          const double tc = tr.tanh_c[s].at(i, j);
          const double dh = grad_output.at(i, t, d * h + j) + dh_next.at(i, j);
          const double dc = dh * og * (1.0 - tc * tc) + dc_next.at(i, j);
          dai[j] = dc * gg * ig * (1.0 - ig);
          dai[h + j] = dc * c_prev.at(i, j) * fg * (1.0 - fg);
          dai[2 * h + j] = dc * ig * (1.0 - gg * gg);
          dai[3 * h + j] = dh * tc * og * (1.0 - og);
          dc_next.at(i, j) = dc * fg;
        }
        for (std::size_t j = 0; j < g4; ++j) cell.b.grad[j] += dai[j];
      }
      matmul_at_b_acc(tr.x[s].data(), da.data(), cell.w.grad.data(), n, f, g4);
      matmul_at_b_acc(h_prev.data(), da.data(), cell.u.grad.data(), n, h, g4);
      Tensor dxt({n, f});
      matmul_a_bt(da.data(), cell.w.value.data(), dxt.data(), n, g4, f);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < f; ++j) dx.at(i, t, j) += dxt.at(i, j);
      matmul_a_bt(da.data(), cell.u.value.data(), dh_next.data(), n, g4, h);
    }
  }

  std::size_t features_, hidden_;
  Direction dir_;
  std::array<Cell, 2> cells_;
  std::array<Trace, 2> traces_;
  Tensor input_;
  Shape out_shape_;
  bool cached_ = false;
};

inline Tensor bilstm_forward(const Tensor& input, const Lstm& layer) {
  if (layer.direction() != Direction::bidirectional) throw ConfigError("bilstm_forward needs a bidirectional layer");
  return layer.infer(input);
}

}  // namespace skewnet::nn
