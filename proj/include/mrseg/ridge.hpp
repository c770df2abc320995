#ifndef MRSEG_RIDGE_HPP
#define MRSEG_RIDGE_HPP

/// \file ridge.hpp
/// \brief Closed-form ridge regression base learner with a block-diagonal
/// Gram approximation and its analytic adjoint.
///
/// Given reference features X (hw x C) and targets Y (hw x 1) the learner
/// solves  min_W ||X W - Y||^2 + lambda ||W||^2,  i.e.
/// W = (X^T X + lambda I)^{-1} X^T Y, and predicts logits P = F_Q W.
///
/// With S splits the columns of X are cut into S contiguous blocks X_i of
/// width C/S. Each block is fitted on its own (the Gram matrix is replaced by
/// its block-diagonal restriction) and predictions are summed:
/// P = sum_i F_Q,i W_i. S = 1 is the exact solver. When `bias` is set, every
/// block gets a trailing constant-1 column whose weight is regularized like
/// the others.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mrseg/errors.hpp"
#include "mrseg/tensor.hpp"

namespace mrseg {

struct RidgeConfig {
  double lambda = 5.0;
  std::size_t splits = 1;
  bool bias = true;

  /// Throws ConfigError unless the config is usable for `feature_dim` columns.
  void validate(std::size_t feature_dim) const {
    if (!(lambda >= 0.0)) throw ConfigError("ridge lambda must be >= 0");
    if (splits == 0) throw ConfigError("split count must be positive");
    if (feature_dim % splits != 0)
      throw ConfigError("split count " + std::to_string(splits) +
                        " does not divide feature dimension " + std::to_string(feature_dim));
  }
};

struct RidgeSolution {
  /// Per-block mapping matrices, each (C/S + bias) x 1.
  std::vector<Matrix> blocks;
  std::size_t feature_dim = 0;
  std::size_t split_count = 0;
  bool bias = false;
  /// Cholesky factors of each block's regularized Gram matrix, kept for the
  /// backward pass. May be empty for hand-built solutions.
  std::vector<Matrix> factors;

  std::size_t block_width() const { return split_count ? feature_dim / split_count : 0; }
};

/// Gradients of a loss with respect to the ridge inputs.
struct RidgeAdjoints {
  Matrix d_x;   ///< hw x C, reference features
  Matrix d_y;   ///< hw x 1, reference targets
  Matrix d_fq;  ///< hw_q x C, query features
};

namespace detail {

/// Columns [b*width, (b+1)*width) of `x`, optionally followed by a 1-column.
inline Matrix block_design(const Matrix& x, std::size_t b, std::size_t width, bool bias) {
  const std::size_t cols = width + (bias ? 1 : 0);
  Matrix out(x.rows(), cols);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto src = x.row(r);
    auto dst = out.row(r);
    for (std::size_t j = 0; j < width; ++j) dst[j] = src[b * width + j];
    if (bias) dst[width] = 1.0;
  }
  return out;
}

inline void check_targets(const Matrix& x, const Matrix& y) {
  if (y.cols() != 1) throw DimensionError("ridge targets must be a column, got " + y.shape());
  if (x.rows() != y.rows())
    throw DimensionError("ridge rows mismatch: X " + x.shape() + " vs Y " + y.shape());
}

}  // namespace detail

/// Fits each of cfg.splits column blocks independently.
inline RidgeSolution block_split_fit(const Matrix& x, const Matrix& y, const RidgeConfig& cfg) {
  detail::check_targets(x, y);
  cfg.validate(x.cols());
  RidgeSolution sol;
  sol.feature_dim = x.cols();
  sol.split_count = cfg.splits;
  sol.bias = cfg.bias;
  const std::size_t width = x.cols() / cfg.splits;
  sol.blocks.reserve(cfg.splits);
  sol.factors.reserve(cfg.splits);
  for (std::size_t b = 0; b < cfg.splits; ++b) {
    const Matrix xb = detail::block_design(x, b, width, cfg.bias);
    Matrix l = cholesky(gram(xb, cfg.lambda));
    sol.blocks.push_back(cholesky_solve(l, matmul(transpose(xb), y)));
    sol.factors.push_back(std::move(l));
  }
  return sol;
}

/// Exact closed-form fit; requires cfg.splits == 1.
inline RidgeSolution ridge_fit(const Matrix& x, const Matrix& y, const RidgeConfig& cfg) {
  if (cfg.splits != 1) throw ConfigError("ridge_fit is the unsplit solver; use block_split_fit");
  return block_split_fit(x, y, cfg);
}

/// Logits P = sum_i F_Q,i W_i, summed in block order.
inline Matrix ridge_predict(const Matrix& f_q, const RidgeSolution& w) {
  if (f_q.cols() != w.feature_dim)
    throw DimensionError("predict feature mismatch: F_Q " + f_q.shape() + " vs W for " +
                         std::to_string(w.feature_dim) + " features");
  const std::size_t width = w.block_width();
  Matrix p(f_q.rows(), 1);
  for (std::size_t b = 0; b < w.split_count; ++b) {
    const Matrix& wb = w.blocks[b];
    for (std::size_t r = 0; r < f_q.rows(); ++r) {
      auto row = f_q.row(r);
      double s = 0.0;
      for (std::size_t j = 0; j < width; ++j) s += row[b * width + j] * wb(j, 0);
      if (w.bias) s += wb(width, 0);
      p(r, 0) += s;
    }
  }
  return p;
}

struct PredictAdjoints {
  Matrix d_fq;               ///< hw_q x C
  std::vector<Matrix> d_w;   ///< congruent with RidgeSolution::blocks
};

/// Backward of ridge_predict for upstream d_logits = dL/dP.
inline PredictAdjoints predict_backward(const Matrix& f_q, const RidgeSolution& w,
                                        const Matrix& d_logits) {
  if (f_q.cols() != w.feature_dim || d_logits.rows() != f_q.rows() || d_logits.cols() != 1)
    throw DimensionError("predict_backward shape mismatch: F_Q " + f_q.shape() + ", dP " +
                         d_logits.shape());
  const std::size_t width = w.block_width();
  PredictAdjoints out{Matrix(f_q.rows(), f_q.cols()), {}};
  for (std::size_t b = 0; b < w.split_count; ++b) {
    const Matrix& wb = w.blocks[b];
    Matrix g(wb.rows(), 1);
    for (std::size_t r = 0; r < f_q.rows(); ++r) {
      const double gp = d_logits(r, 0);
      auto row = f_q.row(r);
      auto drow = out.d_fq.row(r);
      for (std::size_t j = 0; j < width; ++j) {
        g(j, 0) += row[b * width + j] * gp;
        drow[b * width + j] = gp * wb(j, 0);
      }
      if (w.bias) g(width, 0) += gp;
    }
    out.d_w.push_back(std::move(g));
  }
  return out;
}

/// Adjoint of the fit map (X, Y) -> W.
///
/// Per block with A = X_i^T X_i + lambda I, u = A^{-1} g_i and residual
/// r = Y - X_i W_i:
///   dL/dX_i = r u^T - X_i u W_i^T,   dL/dY += X_i u.
/// Bias columns are constants, so their rows of dL/dX_i are dropped.
inline RidgeAdjoints ridge_backward(const Matrix& x, const Matrix& y, const RidgeConfig& cfg,
                                    const RidgeSolution& w, const std::vector<Matrix>& g) {
  detail::check_targets(x, y);
  cfg.validate(x.cols());
  if (w.feature_dim != x.cols() || w.split_count != cfg.splits || w.bias != cfg.bias ||
      g.size() != w.blocks.size())
    throw DimensionError("ridge_backward: solution does not match X " + x.shape());
  const std::size_t width = x.cols() / cfg.splits;
  RidgeAdjoints adj{Matrix(x.rows(), x.cols()), Matrix(x.rows(), 1), Matrix()};
  for (std::size_t b = 0; b < cfg.splits; ++b) {
    const Matrix& wb = w.blocks[b];
    if (g[b].rows() != wb.rows() || g[b].cols() != 1)
      throw DimensionError("ridge_backward: gradient block " + std::to_string(b) + " has shape " +
                           g[b].shape() + ", expected " + wb.shape());
    const Matrix xb = detail::block_design(x, b, width, cfg.bias);
    const Matrix u = b < w.factors.size() ? cholesky_solve(w.factors[b], g[b])
                                          : spd_solve(gram(xb, cfg.lambda), g[b]);
    const Matrix xw = matmul(xb, wb);
    const Matrix xu = matmul(xb, u);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      const double res = y(r, 0) - xw(r, 0);
      const double xur = xu(r, 0);
      auto drow = adj.d_x.row(r);
      for (std::size_t j = 0; j < width; ++j)
        drow[b * width + j] = res * u(j, 0) - xur * wb(j, 0);
      adj.d_y(r, 0) += xur;
    }
  }
  return adj;
}

/// Full chain for a query prediction: upstream dL/dP on the query logits
/// back to reference features, reference targets and query features.
inline RidgeAdjoints ridge_backward(const Matrix& x, const Matrix& y, const RidgeConfig& cfg,
                                    const RidgeSolution& w, const Matrix& f_q,
                                    const Matrix& d_logits) {
  PredictAdjoints pa = predict_backward(f_q, w, d_logits);
  RidgeAdjoints adj = ridge_backward(x, y, cfg, w, pa.d_w);
  adj.d_fq = std::move(pa.d_fq);
  return adj;
}

/// Entry count of the block Gram matrices: S * (C/S)^2 = C^2 / S.
inline std::uint64_t inversion_cost(std::uint64_t feature_dim, std::uint64_t splits) {
  if (splits == 0 || feature_dim % splits != 0)
    throw ConfigError("split count " + std::to_string(splits) + " does not divide " +
                      std::to_string(feature_dim));
  const std::uint64_t width = feature_dim / splits;
  return splits * width * width;
}

}  // namespace mrseg

#endif  // MRSEG_RIDGE_HPP
