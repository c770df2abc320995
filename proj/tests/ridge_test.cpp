#include <gtest/gtest.h>

#include <cmath>

#include "mrseg/loss.hpp"
#include "mrseg/pipeline.hpp"
#include "mrseg/ridge.hpp"
#include "oracles.hpp"

namespace mrseg {
namespace {

RidgeConfig plain(double lambda, std::size_t splits = 1) { return {lambda, splits, false}; }

double norm2(const Matrix& m) {
  double s = 0.0;
  for (double v : m.data()) s += v * v;
  return std::sqrt(s);
}

TEST(RidgeFit, IdentityDesignShrinksTargets) {
  const RidgeSolution w = ridge_fit(Matrix::identity(2), Matrix{{1}, {0}}, plain(1.0));
  ASSERT_EQ(w.blocks.size(), 1u);
  EXPECT_NEAR(w.blocks[0](0, 0), 0.5, 1e-15);
  EXPECT_NEAR(w.blocks[0](1, 0), 0.0, 1e-15);
}

TEST(RidgeFit, ThreeByTwoByHandAndByDescent) {
  const Matrix x{{1, 0}, {0, 1}, {1, 1}};
  const Matrix y{{1}, {0}, {1}};
  const RidgeSolution w = ridge_fit(x, y, plain(1.0));
  EXPECT_NEAR(w.blocks[0](0, 0), 0.625, 1e-14);
  EXPECT_NEAR(w.blocks[0](1, 0), 0.125, 1e-14);
  const Matrix gd = oracle::ridge_gradient_descent(x, y, 1.0);
  EXPECT_NEAR(gd(0, 0), 0.625, 1e-8);
  EXPECT_NEAR(gd(1, 0), 0.125, 1e-8);
}

TEST(RidgeFit, DefaultLambdaIsFive) {
  EXPECT_EQ(RidgeConfig{}.lambda, 5.0);
  EXPECT_EQ(TrainConfig{}.lambda, 5.0);
}

TEST(RidgeFit, RefusesSplitConfig) {
  EXPECT_THROW(ridge_fit(Matrix(4, 4), Matrix(4, 1), plain(1.0, 2)), ConfigError);
}

TEST(RidgeFit, RankDeficientWithoutRegularizerIsNotPositiveDefinite) {
  EXPECT_THROW(ridge_fit(Matrix(3, 2), Matrix{{1}, {0}, {1}}, plain(0.0)), NotPositiveDefinite);
}

TEST(RidgeFit, ShapeErrors) {
  EXPECT_THROW(ridge_fit(Matrix(4, 2), Matrix(3, 1), plain(1.0)), DimensionError);
  EXPECT_THROW(ridge_fit(Matrix(4, 2), Matrix(4, 2), plain(1.0)), DimensionError);
  EXPECT_THROW(ridge_fit(Matrix(4, 2), Matrix(4, 1), plain(-1.0)), ConfigError);
}

// Normal equations (X^T X + lambda I) W = X^T Y, checked with naive products.
TEST(RidgeFit, NormalEquationResidualOnRandomInstances) {
  Rng rng(100);
  const double lambdas[] = {0.1, 1.0, 5.0};
  for (int t = 0; t < 100; ++t) {
    const std::size_t hw = 4 + rng.below(125), c = 4 + rng.below(125);
    const double lambda = lambdas[rng.below(3)];
    const Matrix x = oracle::random_matrix(rng, hw, c);
    const Matrix y = oracle::random_matrix(rng, hw, 1);
    const Matrix w = ridge_fit(x, y, plain(lambda)).blocks[0];
    const Matrix xt = oracle::naive_transpose(x);
    const Matrix xty = oracle::naive_matmul(xt, y);
    Matrix lhs = oracle::naive_matmul(xt, oracle::naive_matmul(x, w));
    for (std::size_t i = 0; i < c; ++i) lhs(i, 0) += lambda * w(i, 0);
    EXPECT_LE(max_abs(lhs - xty), 1e-10 * (1.0 + max_abs(xty)))
        << "hw=" << hw << " C=" << c << " lambda=" << lambda;
  }
}

TEST(RidgeFit, AgreesWithGradientDescentMinimizer) {
  Rng rng(101);
  const double lambdas[] = {0.1, 1.0, 5.0};
  for (int t = 0; t < 30; ++t) {
    const std::size_t hw = 2 + rng.below(15), c = 1 + rng.below(8);
    const double lambda = lambdas[t % 3];
    const Matrix x = oracle::random_matrix(rng, hw, c);
    const Matrix y = oracle::random_matrix(rng, hw, 1);
    const Matrix w = ridge_fit(x, y, plain(lambda)).blocks[0];
    EXPECT_LE(max_abs(w - oracle::ridge_gradient_descent(x, y, lambda)), 1e-6);
  }
}

TEST(RidgeFit, LargerLambdaNeverGrowsTheSolution) {
  Rng rng(102);
  for (int t = 0; t < 40; ++t) {
    const Matrix x = oracle::random_matrix(rng, 5 + rng.below(30), 1 + rng.below(20));
    const Matrix y = oracle::random_matrix(rng, x.rows(), 1);
    double prev = INFINITY;
    for (double lambda : {0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 20.0}) {
      const double n = norm2(ridge_fit(x, y, plain(lambda)).blocks[0]);
      EXPECT_LE(n, prev * (1.0 + 1e-12));
      prev = n;
    }
  }
}

TEST(RidgeFit, BiasColumnAbsorbsConstantOffset) {
  // Targets all +1 with zero features: only the bias can fit them.
  const RidgeSolution w = ridge_fit(Matrix(4, 2), Matrix(4, 1, 1.0), {1.0, 1, true});
  ASSERT_EQ(w.blocks[0].rows(), 3u);
  EXPECT_NEAR(w.blocks[0](2, 0), 4.0 / 5.0, 1e-15);
  EXPECT_EQ(w.blocks[0](0, 0), 0.0);
}

TEST(RidgePredict, InterpolatesWithoutRegularizer) {
  Rng rng(103);
  const Matrix x = oracle::random_matrix(rng, 6, 6);
  const Matrix y = oracle::random_matrix(rng, 6, 1);
  const Matrix p = ridge_predict(x, ridge_fit(x, y, plain(0.0)));
  EXPECT_LE(max_abs(p - y), 1e-10);
}

TEST(RidgePredict, ZeroMappingGivesZeroLogits) {
  RidgeSolution w{{Matrix(3, 1)}, 3, 1, false, {}};
  Rng rng(104);
  EXPECT_EQ(max_abs(ridge_predict(oracle::random_matrix(rng, 5, 3), w)), 0.0);
}

TEST(RidgePredict, TwoBlocksByHand) {
  const Matrix x{{1, 0}, {0, 1}, {1, 1}};
  const Matrix y{{1}, {0}, {1}};
  const RidgeSolution w = block_split_fit(x, y, plain(1.0, 2));
  ASSERT_EQ(w.blocks.size(), 2u);
  EXPECT_NEAR(w.blocks[0](0, 0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(w.blocks[1](0, 0), 1.0 / 3.0, 1e-15);
  const Matrix p = ridge_predict(x, w);
  EXPECT_NEAR(p(0, 0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p(1, 0), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(p(2, 0), 1.0, 1e-15);
  // Each block is its own one-column ridge problem.
  EXPECT_NEAR(oracle::ridge_gradient_descent(Matrix{{1}, {0}, {1}}, y, 1.0)(0, 0), 2.0 / 3.0, 1e-8);
  EXPECT_NEAR(oracle::ridge_gradient_descent(Matrix{{0}, {1}, {1}}, y, 1.0)(0, 0), 1.0 / 3.0, 1e-8);
}

TEST(RidgePredict, FeatureMismatch) {
  const RidgeSolution w = ridge_fit(Matrix::identity(2), Matrix{{1}, {0}}, plain(1.0));
  EXPECT_THROW(ridge_predict(Matrix(3, 3), w), DimensionError);
}

TEST(BlockSplit, OneSplitEqualsFullSolve) {
  Rng rng(105);
  for (int t = 0; t < 20; ++t) {
    const Matrix x = oracle::random_matrix(rng, 10 + rng.below(40), 2 + rng.below(20));
    const Matrix y = oracle::random_matrix(rng, x.rows(), 1);
    const Matrix block = block_split_fit(x, y, plain(1.0, 1)).blocks[0];
    const Matrix full = oracle::ridge_normal_solve(x, y, 1.0);
    EXPECT_LE(max_abs(block - full), 1e-12 * (1.0 + max_abs(full)));
  }
}

TEST(BlockSplit, OrthogonalBlocksEqualFullSolve) {
  const Matrix x{{1, 0}, {0, 1}, {0, 0}};
  const Matrix y{{0.3}, {-2}, {5}};
  const RidgeSolution split = block_split_fit(x, y, plain(0.7, 2));
  const Matrix full = oracle::ridge_normal_solve(x, y, 0.7);
  EXPECT_NEAR(split.blocks[0](0, 0), full(0, 0), 1e-12);
  EXPECT_NEAR(split.blocks[1](0, 0), full(1, 0), 1e-12);

  // Wider fixture: rows supported on disjoint column blocks.
  Rng rng(106);
  Matrix wide(12, 6);
  for (std::size_t r = 0; r < 12; ++r)
    for (std::size_t j = 0; j < 2; ++j) wide(r, (r % 3) * 2 + j) = rng.uniform(-1, 1);
  const Matrix yw = oracle::random_matrix(rng, 12, 1);
  const RidgeSolution s3 = block_split_fit(wide, yw, plain(0.5, 3));
  const Matrix f3 = oracle::ridge_normal_solve(wide, yw, 0.5);
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(s3.blocks[b](j, 0), f3(b * 2 + j, 0), 1e-12);
  EXPECT_LE(max_abs(ridge_predict(wide, s3) - oracle::naive_matmul(wide, f3)), 1e-12);
}

TEST(BlockSplit, EachBlockMatchesIndependentDescent) {
  Rng rng(107);
  const Matrix x = oracle::random_matrix(rng, 14, 8);
  const Matrix y = oracle::random_matrix(rng, 14, 1);
  const RidgeSolution s = block_split_fit(x, y, plain(0.5, 4));
  for (std::size_t b = 0; b < 4; ++b) {
    Matrix xb(14, 2);
    for (std::size_t r = 0; r < 14; ++r)
      for (std::size_t j = 0; j < 2; ++j) xb(r, j) = x(r, b * 2 + j);
    EXPECT_LE(max_abs(s.blocks[b] - oracle::ridge_gradient_descent(xb, y, 0.5)), 1e-6);
  }
}

TEST(BlockSplit, SplitMustDivideFeatures) {
  EXPECT_THROW(block_split_fit(Matrix(5, 6), Matrix(5, 1), plain(1.0, 4)), ConfigError);
  EXPECT_THROW(block_split_fit(Matrix(5, 6), Matrix(5, 1), plain(1.0, 0)), ConfigError);
}

// ---------------------------------------------------------------------------
// Backward

TEST(RidgeBackward, ZeroUpstreamGivesZeroAdjoints) {
  Rng rng(110);
  const Matrix x = oracle::random_matrix(rng, 6, 4);
  const Matrix y = oracle::random_matrix(rng, 6, 1);
  const RidgeConfig cfg{1.0, 2, true};
  const RidgeSolution w = block_split_fit(x, y, cfg);
  const RidgeAdjoints adj =
      ridge_backward(x, y, cfg, w, std::vector<Matrix>{Matrix(3, 1), Matrix(3, 1)});
  EXPECT_EQ(max_abs(adj.d_x), 0.0);
  EXPECT_EQ(max_abs(adj.d_y), 0.0);
}

TEST(RidgeBackward, ScalarCaseMatchesSymbolicDerivative) {
  // w = x y / (x^2 + lambda)  =>  dw/dx = (y - 2 x w) / (x^2 + lambda), dw/dy = x / (x^2 + lambda)
  const double xs = 1.7, ys = -0.4, lambda = 0.9, g = 1.3;
  const Matrix x{{xs}}, y{{ys}};
  const RidgeSolution w = ridge_fit(x, y, plain(lambda));
  const double wv = xs * ys / (xs * xs + lambda);
  EXPECT_NEAR(w.blocks[0](0, 0), wv, 1e-15);
  const RidgeAdjoints adj = ridge_backward(x, y, plain(lambda), w, std::vector<Matrix>{Matrix{{g}}});
  EXPECT_NEAR(adj.d_x(0, 0), (ys - 2 * xs * wv) / (xs * xs + lambda) * g, 1e-14);
  EXPECT_NEAR(adj.d_y(0, 0), xs / (xs * xs + lambda) * g, 1e-14);
}

class RidgeBackwardFd : public ::testing::TestWithParam<std::size_t> {};

TEST_P(RidgeBackwardFd, MatchesCentralDifferences) {
  const std::size_t splits = GetParam();
  Rng rng(111 + splits);
  Matrix x = oracle::random_matrix(rng, 6, 4);
  Matrix y = oracle::random_matrix(rng, 6, 1);
  Matrix fq = oracle::random_matrix(rng, 5, 4);
  const Matrix t = oracle::random_matrix(rng, 5, 1, 0.0, 1.0);
  const RidgeConfig cfg{1.0, splits, true};
  const auto loss = [&] {
    return bce_with_logits(ridge_predict(fq, block_split_fit(x, y, cfg)), t).loss;
  };
  const RidgeSolution w = block_split_fit(x, y, cfg);
  const BceResult b = bce_with_logits(ridge_predict(fq, w), t);
  const RidgeAdjoints adj = ridge_backward(x, y, cfg, w, fq, b.d_logits);
  ASSERT_EQ(adj.d_x.rows(), 6u);
  ASSERT_EQ(adj.d_x.cols(), 4u);
  ASSERT_EQ(adj.d_fq.rows(), 5u);
  const double l0 = loss(), step = 1e-6, tol = 1e-6;
  const auto check = [&](std::vector<double>& values, const Matrix& analytic, const char* name) {
    const auto num = oracle::central_differences(loss, values, step);
    EXPECT_LE(oracle::max_relative_error(analytic.data(), num, l0, step, tol), tol) << name;
  };
  check(x.data(), adj.d_x, "d_x");
  check(y.data(), adj.d_y, "d_y");
  check(fq.data(), adj.d_fq, "d_fq");
}

INSTANTIATE_TEST_SUITE_P(Splits, RidgeBackwardFd, ::testing::Values(1, 2, 4));

TEST(RidgeBackward, RejectsMismatchedGradient) {
  const Matrix x = Matrix::identity(2), y{{1}, {0}};
  const RidgeSolution w = ridge_fit(x, y, plain(1.0));
  EXPECT_THROW(ridge_backward(x, y, plain(1.0), w, std::vector<Matrix>{Matrix(3, 1)}),
               DimensionError);
  EXPECT_THROW(ridge_backward(x, y, plain(1.0), w, std::vector<Matrix>{}), DimensionError);
}

TEST(RidgeBackward, WorksWithoutCachedFactors) {
  Rng rng(115);
  const Matrix x = oracle::random_matrix(rng, 7, 4);
  const Matrix y = oracle::random_matrix(rng, 7, 1);
  const RidgeConfig cfg{2.0, 2, true};
  RidgeSolution w = block_split_fit(x, y, cfg);
  const std::vector<Matrix> g{Matrix{{0.1}, {-0.2}, {0.3}}, Matrix{{0.4}, {0.5}, {-0.6}}};
  const RidgeAdjoints cached = ridge_backward(x, y, cfg, w, g);
  w.factors.clear();
  const RidgeAdjoints fresh = ridge_backward(x, y, cfg, w, g);
  EXPECT_LE(max_abs(cached.d_x - fresh.d_x), 1e-14);
}

TEST(InversionCost, TableValues) {
  EXPECT_EQ(inversion_cost(800, 1), 640000u);
  EXPECT_EQ(inversion_cost(800, 2), 320000u);
  EXPECT_EQ(inversion_cost(800, 4), 160000u);
  EXPECT_EQ(inversion_cost(800, 8), 80000u);
  EXPECT_EQ(inversion_cost(800, 800), 800u);
}

TEST(InversionCost, HalvesWhenSplitsDouble) {
  for (std::uint64_t c : {64u, 96u, 800u}) {
    std::uint64_t prev = inversion_cost(c, 1);
    for (std::uint64_t s = 2; s <= c; s *= 2) {
      if (c % s != 0) break;
      const std::uint64_t cur = inversion_cost(c, s);
      EXPECT_LT(cur, prev);
      EXPECT_EQ(cur * 2, prev);
      prev = cur;
    }
  }
}

TEST(InversionCost, DivisibilityError) {
  EXPECT_THROW(inversion_cost(800, 3), ConfigError);
  EXPECT_THROW(inversion_cost(800, 0), ConfigError);
}

}  // namespace
}  // namespace mrseg
