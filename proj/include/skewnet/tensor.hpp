#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "skewnet/error.hpp"

namespace skewnet {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << " x ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Dense row-major array of doubles.
///
/// A leading extent of zero is accepted so that empty datasets can be
/// represented; every other extent must be positive.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(checked_size(shape_), fill) {}

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_size(shape_) != data_.size()) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string(shape_));
    }
  }

  /// Row-major matrix from nested initializer lists.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw DimensionError("ragged matrix literal");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
  }

  static Tensor vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  double& at(std::size_t i, std::size_t j) noexcept { return data_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const noexcept { return data_[i * shape_[1] + j]; }

  double& at(std::size_t i, std::size_t j, std::size_t k) noexcept {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const noexcept {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  /// Contiguous slice for leading index i (a matrix row, a sample of a batch).
  std::span<double> row(std::size_t i) noexcept {
    const std::size_t w = row_width();
    return {data_.data() + i * w, w};
  }
  std::span<const double> row(std::size_t i) const noexcept {
    const std::size_t w = row_width();
    return {data_.data() + i * w, w};
  }

  std::size_t rows() const noexcept { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t row_width() const noexcept {
    if (shape_.empty()) return 0;
    std::size_t w = 1;
    for (std::size_t a = 1; a < shape_.size(); ++a) w *= shape_[a];
    return w;
  }

  Tensor reshaped(Shape shape) const& {
    Tensor t = *this;
    return std::move(t).reshaped(std::move(shape));
  }
  Tensor reshaped(Shape shape) && {
    if (checked_size(shape) != data_.size()) {
      throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    shape_ = std::move(shape);
    return std::move(*this);
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  /// Exact equality of shape and every element (bitwise for non-NaN values).
  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  static std::size_t checked_size(const Shape& shape) {
    for (std::size_t a = 0; a < shape.size(); ++a) {
      if (shape[a] == 0 && a != 0) {
        throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
      }
    }
    return shape_product(shape);
  }

  Shape shape_;
  std::vector<double> data_;
};

/// out[N x M] = a[N x K] * b[K x M]  (row-major, accumulate-free)
inline void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
                   std::size_t n, std::size_t k, std::size_t m) {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double* o = out.data() + i * m;
    const double* ai = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += av * bp[j];
    }
  }
}

/// out[K x M] += a[N x K]^T * b[N x M]
inline void matmul_at_b_acc(std::span<const double> a, std::span<const double> b, std::span<double> out,
                            std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a.data() + i * k;
    const double* bi = b.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      double* o = out.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += av * bi[j];
    }
  }
}

/// out[N x K] = a[N x M] * b[K x M]^T
inline void matmul_a_bt(std::span<const double> a, std::span<const double> b, std::span<double> out,
                        std::size_t n, std::size_t m, std::size_t k) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a.data() + i * m;
    double* o = out.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b.data() + p * m;
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += ai[j] * bp[j];
      o[p] = s;
    }
  }
}

}  // namespace skewnet
