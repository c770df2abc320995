#ifndef MRSEG_GRADCHECK_HPP
#define MRSEG_GRADCHECK_HPP

/// \file gradcheck.hpp
/// \brief Central finite-difference checks of the hand-written adjoints.
///
/// Three suites, each returning one entry per checked tensor:
///   - ridge: (X, Y, F_Q) -> BCE(predict(F_Q, fit(X, Y))), tolerance 1e-6
///   - encoder: params, image -> <upstream, encode(params, image)>, 1e-4
///   - episode: encoder params -> full episode loss, 1e-4

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mrseg/encoder.hpp"
#include "mrseg/loss.hpp"
#include "mrseg/pipeline.hpp"
#include "mrseg/ridge.hpp"
#include "mrseg/rng.hpp"

namespace mrseg::gradcheck {

/// |a - n| / max(|a|, |n|, floor).
inline double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

/// Central differences of `loss` with respect to every entry of `values`,
/// which are perturbed in place and restored.
template <typename Loss>
std::vector<double> central_differences(Loss&& loss, std::span<double> values, double step) {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double keep = values[i];
    values[i] = keep + step;
    const double up = loss();
    values[i] = keep - step;
    const double down = loss();
    values[i] = keep;
    out[i] = (up - down) / (2.0 * step);
  }
  return out;
}

struct Entry {
  std::string suite;
  std::string tensor;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool pass() const { return max_rel_error <= tolerance; }
};

struct Options {
  std::uint64_t seed = 7;
  std::size_t splits = 2;
  std::size_t c_out = 8;
  /// Test fixture: perturbs one analytic gradient entry so the suite must fail.
  bool corrupt_adjoint = false;
};

inline constexpr double kRidgeTolerance = 1e-6;
inline constexpr double kRidgeStep = 1e-6;
inline constexpr double kEncoderTolerance = 1e-4;
inline constexpr double kEncoderStep = 1e-5;

/// Smallest gradient magnitude a central difference of step `step` can
/// certify to relative tolerance `tol`: its round-off is about
/// eps * |loss| / step, so entries below that divided by `tol` are compared
/// against this floor instead of their own magnitude.
inline double resolution_floor(double loss, double step, double tol) {
  return std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(loss)) / (step * tol);
}

namespace detail {

template <typename Loss>
Entry compare(const std::string& suite, const std::string& name, Loss&& loss,
              std::span<double> values, std::span<const double> analytic, double step, double tol) {
  const double floor = resolution_floor(loss(), step, tol);
  const std::vector<double> numeric = central_differences(loss, values, step);
  Entry e{suite, name, 0.0, tol};
  for (std::size_t i = 0; i < numeric.size(); ++i)
    e.max_rel_error = std::max(e.max_rel_error, relative_error(analytic[i], numeric[i], floor));
  return e;
}

inline void corrupt(std::vector<double>& g) {
  if (!g.empty()) g[0] += 1e-3 * (1.0 + std::abs(g[0]));
}

inline Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double lo, double hi) {
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

}  // namespace detail

/// Ridge fit + predict + BCE on a random 6x4 reference / 5x4 query problem.
inline std::vector<Entry> check_ridge(const Options& opt, std::size_t rows = 6,
                                      std::size_t cols = 4) {
  Rng rng(mix_seed(opt.seed, 11));
  Matrix x = detail::random_matrix(rng, rows, cols, -1.0, 1.0);
  Matrix y = detail::random_matrix(rng, rows, 1, -1.0, 1.0);
  Matrix fq = detail::random_matrix(rng, rows - 1, cols, -1.0, 1.0);
  const Matrix t = detail::random_matrix(rng, rows - 1, 1, 0.0, 1.0);
  const RidgeConfig cfg{1.0, opt.splits, true};

  const auto loss = [&] {
    return bce_with_logits(ridge_predict(fq, block_split_fit(x, y, cfg)), t).loss;
  };
  const RidgeSolution sol = block_split_fit(x, y, cfg);
  const BceResult b = bce_with_logits(ridge_predict(fq, sol), t);
  RidgeAdjoints adj = ridge_backward(x, y, cfg, sol, fq, b.d_logits);
  if (opt.corrupt_adjoint) detail::corrupt(adj.d_x.data());

  const std::string suite = "ridge(S=" + std::to_string(opt.splits) + ")";
  return {detail::compare(suite, "d_x", loss, std::span(x.data()), adj.d_x.data(), kRidgeStep,
                          kRidgeTolerance),
          detail::compare(suite, "d_y", loss, std::span(y.data()), adj.d_y.data(), kRidgeStep,
                          kRidgeTolerance),
          detail::compare(suite, "d_fq", loss, std::span(fq.data()), adj.d_fq.data(), kRidgeStep,
                          kRidgeTolerance)};
}

/// Two stride-2 layers on a 16x16 image against a fixed random upstream.
inline std::vector<Entry> check_encoder(const Options& opt) {
  EncoderArch arch{{3, 6, 5}, {2, 2}};
  EncoderParams p = init_encoder(arch, mix_seed(opt.seed, 21));
  Rng rng(mix_seed(opt.seed, 22));
  for (auto& l : p.layers)
    for (double& b : l.bias) b = rng.uniform(-0.1, 0.1);
  Tensor3 image(3, 16, 16);
  for (double& v : image.data()) v = rng.uniform(0.0, 1.0);
  Tensor3 upstream(5, 4, 4);
  for (double& v : upstream.data()) v = rng.uniform(-1.0, 1.0);

  const auto loss = [&] {
    const Tensor3 out = encode(p, image);
    return mrseg::detail::dot(out.data().data(), upstream.data().data(), out.size());
  };
  EncoderGrads g = encode_backward(p, image, upstream);
  if (opt.corrupt_adjoint) detail::corrupt(g.params.layers[0].kernels);

  std::vector<Entry> out;
  std::vector<std::span<const double>> analytic;
  for_each_param(g.params, [&](const std::string&, std::span<const double> a) { analytic.push_back(a); });
  std::size_t k = 0;
  for_each_param(p, [&](const std::string& name, std::span<double> v) {
    out.push_back(detail::compare("encoder", name, loss, v, analytic[k++], kEncoderStep,
                                  kEncoderTolerance));
  });
  out.push_back(detail::compare("encoder", "image", loss, std::span(image.data()), g.image.data(),
                                kEncoderStep, kEncoderTolerance));
  return out;
}

/// Keystone: encoder -> ridge fit on reference -> predict on query -> BCE,
/// differentiated with respect to every encoder parameter. 16x16 frames, so
/// the default 3-layer encoder yields a 2x2 feature grid.
inline std::vector<Entry> check_episode(const Options& opt) {
  TrainConfig cfg;
  cfg.c_out = opt.c_out;
  cfg.splits = opt.splits;
  cfg.validate();
  EncoderParams p = init_encoder(default_arch(cfg.c_out), mix_seed(opt.seed, 31));
  Rng rng(mix_seed(opt.seed, 32));
  for (auto& l : p.layers)
    for (double& b : l.bias) b = rng.uniform(-0.1, 0.1);
  const auto random_frame = [&] {
    Frame f{Tensor3(3, 16, 16), Mask(16, 16)};
    for (double& v : f.image.data()) v = rng.uniform(0.0, 1.0);
    for (auto& b : f.mask.bits) b = rng.uniform() < 0.4 ? 1 : 0;
    return f;
  };
  const Frame ref = random_frame();
  const Frame query = random_frame();

  const auto loss = [&] {
    return episode_loss(p, ref.image, ref.mask, query.image, query.mask, cfg);
  };
  EncoderParams grads = p.zeros_like();
  episode_loss(p, ref.image, ref.mask, query.image, query.mask, cfg, &grads);
  if (opt.corrupt_adjoint) detail::corrupt(grads.layers.back().kernels);

  std::vector<std::span<const double>> analytic;
  for_each_param(grads, [&](const std::string&, std::span<const double> a) { analytic.push_back(a); });
  const std::string suite = "episode(C=" + std::to_string(cfg.c_out) + ",S=" +
                            std::to_string(cfg.splits) + ")";
  std::vector<Entry> out;
  std::size_t k = 0;
  for_each_param(p, [&](const std::string& name, std::span<double> v) {
    out.push_back(
        detail::compare(suite, name, loss, v, analytic[k++], kEncoderStep, kEncoderTolerance));
  });
  return out;
}

inline std::vector<Entry> run_all(const Options& opt) {
  std::vector<Entry> all;
  for (auto&& part : {check_ridge(opt), check_encoder(opt), check_episode(opt)})
    all.insert(all.end(), part.begin(), part.end());
  return all;
}

}  // namespace mrseg::gradcheck

#endif  // MRSEG_GRADCHECK_HPP
