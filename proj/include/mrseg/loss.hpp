#ifndef MRSEG_LOSS_HPP
#define MRSEG_LOSS_HPP

#include <algorithm>
#include <cmath>

#include "mrseg/errors.hpp"
#include "mrseg/tensor.hpp"

namespace mrseg {

struct BceResult {
  double loss = 0.0;
  Matrix d_logits;
};

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Mean binary cross-entropy on logits with per-element weight `weight`,
/// in the overflow-free form  max(x,0) - x*y + log(1 + exp(-|x|)).
/// Returns the loss and dLoss/dlogits = weight * (sigmoid(x) - y) / N.
inline BceResult bce_with_logits(const Matrix& logits, const Matrix& targets, double weight = 1.0) {
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols())
    throw DimensionError("bce shape mismatch: logits " + logits.shape() + " vs targets " +
                         targets.shape());
  const std::size_t n = logits.size();
  if (n == 0) throw DimensionError("bce on empty input");
  BceResult r{0.0, Matrix(logits.rows(), logits.cols())};
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double x = logits.data()[k];
    const double y = targets.data()[k];
    if (!(y >= 0.0 && y <= 1.0)) throw DomainError("bce target outside [0,1]: " + std::to_string(y));
    r.loss += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
    r.d_logits.data()[k] = weight * (sigmoid(x) - y) * inv_n;
  }
  r.loss *= weight * inv_n;
  return r;
}

}  // namespace mrseg

#endif  // MRSEG_LOSS_HPP
