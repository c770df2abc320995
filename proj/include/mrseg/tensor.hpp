#ifndef MRSEG_TENSOR_HPP
#define MRSEG_TENSOR_HPP

/// \file tensor.hpp
/// \brief Dense row-major matrices, channel-major 3-tensors and the small set
/// of linear-algebra kernels the solver and encoder are built on.
///
/// All kernels are pure: they never mutate their inputs, and identical inputs
/// produce bit-identical outputs (fixed summation order, no threading).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mrseg/errors.hpp"

namespace mrseg {

inline std::string shape_str(std::size_t r, std::size_t c) {
  return "(" + std::to_string(r) + "x" + std::to_string(c) + ")";
}

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
      throw DimensionError("matrix data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_str(rows_, cols_));
  }
  /// Row-list literal, e.g. `Matrix{{1, 2}, {3, 4}}`.
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw DimensionError("ragged matrix literal");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
  static Matrix column(std::vector<double> v) {
    const std::size_t n = v.size();
    return Matrix(n, 1, std::move(v));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  std::string shape() const { return shape_str(rows_, cols_); }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// C x H x W tensor, channel-major (`data[(c * H + y) * W + x]`).
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(std::size_t channels, std::size_t height, std::size_t width, double fill = 0.0)
      : c_(channels), h_(height), w_(width), data_(channels * height * width, fill) {}

  std::size_t channels() const noexcept { return c_; }
  std::size_t height() const noexcept { return h_; }
  std::size_t width() const noexcept { return w_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * h_ + y) * w_ + x];
  }
  double operator()(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * h_ + y) * w_ + x];
  }

  std::span<double> plane(std::size_t c) { return {data_.data() + c * h_ * w_, h_ * w_}; }
  std::span<const double> plane(std::size_t c) const {
    return {data_.data() + c * h_ * w_, h_ * w_};
  }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  bool same_shape(const Tensor3& o) const noexcept {
    return c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
  }
  std::string shape() const {
    return "(" + std::to_string(c_) + "x" + std::to_string(h_) + "x" + std::to_string(w_) + ")";
  }

  friend bool operator==(const Tensor3&, const Tensor3&) = default;

 private:
  std::size_t c_ = 0, h_ = 0, w_ = 0;
  std::vector<double> data_;
};

/// Features C x h x w -> design matrix (h*w) x C; row index is y*w + x.
inline Matrix flatten(const Tensor3& t) {
  const std::size_t hw = t.height() * t.width();
  Matrix m(hw, t.channels());
  for (std::size_t c = 0; c < t.channels(); ++c) {
    auto p = t.plane(c);
    for (std::size_t i = 0; i < hw; ++i) m(i, c) = p[i];
  }
  return m;
}

/// Inverse of flatten().
inline Tensor3 unflatten(const Matrix& m, std::size_t height, std::size_t width) {
  if (m.rows() != height * width)
    throw DimensionError("cannot unflatten " + m.shape() + " to spatial " +
                         shape_str(height, width));
  Tensor3 t(m.cols(), height, width);
  for (std::size_t c = 0; c < m.cols(); ++c) {
    auto p = t.plane(c);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = m(i, c);
  }
  return t;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw DimensionError("matmul shape mismatch: " + a.shape() + " x " + b.shape());
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto orow = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto brow = b.row(k);
      for (std::size_t j = 0; j < brow.size(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

namespace detail {

// Four independent accumulators; fixed order keeps results reproducible.
inline double dot(const double* x, const double* y, std::size_t n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += x[i] * y[i];
    s1 += x[i + 1] * y[i + 1];
    s2 += x[i + 2] * y[i + 2];
    s3 += x[i + 3] * y[i + 3];
  }
  for (; i < n; ++i) s0 += x[i] * y[i];
  return (s0 + s1) + (s2 + s3);
}

}  // namespace detail

/// a^T a for a column range [col_begin, col_end) of `a`, plus `ridge` on the
/// diagonal. Only the column range is touched, so block Gram matrices cost
/// rows * width^2 each.
inline Matrix gram(const Matrix& a, std::size_t col_begin, std::size_t col_end,
                   double ridge = 0.0) {
  if (col_begin > col_end || col_end > a.cols())
    throw DimensionError("gram column range out of bounds for " + a.shape());
  const std::size_t n = col_end - col_begin, m = a.rows();
  std::vector<double> cols(n * m);
  for (std::size_t r = 0; r < m; ++r) {
    auto row = a.row(r);
    for (std::size_t j = 0; j < n; ++j) cols[j * m + r] = row[col_begin + j];
  }
  Matrix g(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const double v = detail::dot(&cols[i * m], &cols[j * m], m);
      g(i, j) = v;
      g(j, i) = v;
    }
    g(i, i) += ridge;
  }
  return g;
}

inline Matrix gram(const Matrix& a, double ridge = 0.0) { return gram(a, 0, a.cols(), ridge); }

/// Lower-triangular Cholesky factor L with a = L L^T.
inline Matrix cholesky(const Matrix& a) {
  if (a.rows() != a.cols()) throw DimensionError("cholesky needs a square matrix, got " + a.shape());
  const std::size_t n = a.rows();
  double scale = 0.0;
  for (double v : a.data()) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (std::abs(a(i, j) - a(j, i)) > 1e-9 * std::max(1.0, scale))
        throw DomainError("matrix is not symmetric at (" + std::to_string(i) + "," +
                          std::to_string(j) + ")");
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    const double* lj = &l(j, 0);
    double d = a(j, j) - detail::dot(lj, lj, j);
    if (!(d > 0.0) || !std::isfinite(d)) throw NotPositiveDefinite(j);
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i)
      l(i, j) = (a(i, j) - detail::dot(&l(i, 0), lj, j)) / ljj;
  }
  return l;
}

/// Solves (L L^T) Z = B given the Cholesky factor L.
inline Matrix cholesky_solve(const Matrix& l, const Matrix& b) {
  const std::size_t n = l.rows();
  if (b.rows() != n)
    throw DimensionError("solve shape mismatch: " + l.shape() + " vs rhs " + b.shape());
  Matrix z(b.rows(), b.cols());
  std::vector<double> y(n);
  for (std::size_t c = 0; c < b.cols(); ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = b(i, c);
      const double* li = l.row(i).data();
      for (std::size_t k = 0; k < i; ++k) s -= li[k] * y[k];
      y[i] = s / li[i];
    }
    for (std::size_t ii = n; ii-- > 0;) {
      double s = y[ii];
      for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * z(k, c);
      z(ii, c) = s / l(ii, ii);
    }
  }
  return z;
}

/// Solves A Z = B for symmetric positive-definite A by factor-and-solve; the
/// explicit inverse is never formed.
inline Matrix spd_solve(const Matrix& a, const Matrix& b) {
  if (b.rows() != a.rows())
    throw DimensionError("spd_solve shape mismatch: " + a.shape() + " vs rhs " + b.shape());
  return cholesky_solve(cholesky(a), b);
}

// Small elementwise helpers.

inline double max_abs(const Matrix& m) {
  double v = 0.0;
  for (double x : m.data()) v = std::max(v, std::abs(x));
  return v;
}

inline Matrix operator-(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError("subtract shape mismatch: " + a.shape() + " vs " + b.shape());
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.data()[i];
  return out;
}

inline Matrix operator+(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError("add shape mismatch: " + a.shape() + " vs " + b.shape());
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
  return out;
}

inline Matrix operator*(double s, const Matrix& a) {
  Matrix out = a;
  for (double& x : out.data()) x *= s;
  return out;
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace mrseg

#endif  // MRSEG_TENSOR_HPP
