// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mona/fixtures.hpp"
#include "oracles.hpp"

using namespace mona;

namespace {

QuadraticLandscape random_quadratic(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::uniform_real_distribution<double> u(0.5, 8.0);
  std::vector<double> eigs(rows * cols);
  for (double& e : eigs) e = u(rng);
  return QuadraticLandscape::rotated(random_normal(rows, cols, rng), eigs, rng);
}

}  // namespace

TEST(Quadratic, GradientMatchesCentralDifferences) {
  std::mt19937_64 rng(1);
  const QuadraticLandscape q = random_quadratic(rng, 3, 4);
  for (int t = 0; t < 100; ++t) {
    const Matrix w = random_normal(3, 4, rng);
    const Matrix fd = oracle::central_difference(w, [&](const Matrix& p) { return q.eval(p).loss; });
    ASSERT_LE(max_abs_diff(q.eval(w).grad, fd), 1e-6);
  }
}

TEST(Quadratic, GradientIsLinearInDisplacement) {
  std::mt19937_64 rng(2);
  const QuadraticLandscape q = random_quadratic(rng, 2, 3);
  const Matrix delta = random_normal(2, 3, rng);
  const Matrix unit = q.eval(q.target() + delta).grad;
  for (double t : {-2.0, -1.0, 0.5, 1.0}) {
    const Matrix g = q.eval(q.target() + delta * t).grad;
    EXPECT_LE(max_abs_diff(g, unit * t), 1e-10 * frobenius_norm(unit) * std::fabs(t));
  }
  EXPECT_EQ(q.eval(q.target()).loss, 0.0);
}

TEST(Quadratic, DiagonalLossInClosedForm) {
  const QuadraticLandscape q = QuadraticLandscape::diagonal(Matrix(1, 2), {4.0, 1.0});
  const LossGrad lg = q.eval(Matrix::from_rows({{20.0, 20.0}}));
  EXPECT_DOUBLE_EQ(lg.loss, 0.5 * (4.0 * 400.0 + 400.0));
  EXPECT_DOUBLE_EQ(lg.grad[0], 80.0);
  EXPECT_DOUBLE_EQ(lg.grad[1], 20.0);
  EXPECT_DOUBLE_EQ(q.lambda_max(), 4.0);
  EXPECT_DOUBLE_EQ(q.lambda_min(), 1.0);
}

TEST(Quadratic, RejectsBadSpecs) {
  EXPECT_THROW(QuadraticLandscape::diagonal(Matrix(1, 2), {1.0}), DimensionError);
  EXPECT_THROW(QuadraticLandscape::diagonal(Matrix(1, 2), {1.0, -1.0}), std::invalid_argument);
  EXPECT_THROW(QuadraticLandscape(Matrix(1, 2), {1.0, 1.0}, Matrix::from_rows({{1.0, 1.0}, {0.0, 1.0}})),
               std::invalid_argument);
}

TEST(DoubleWell, GradientMatchesCentralDifferences) {
  std::mt19937_64 rng(3);
  const DoubleWellLandscape d = DoubleWellLandscape::standard();
  for (int t = 0; t < 100; ++t) {
    const Matrix w = random_uniform(1, 2, -1.0, 4.0, rng);
    const Matrix fd = oracle::central_difference(w, [&](const Matrix& p) { return d.eval(p).loss; });
    ASSERT_LE(max_abs_diff(d.eval(w).grad, fd), 1e-6);
  }
}

TEST(DoubleWell, StandardFixtureGeometry) {
  const DoubleWellLandscape d = DoubleWellLandscape::standard();
  EXPECT_NEAR(d.curvature_ratio(), 18.75, 1e-12);
  EXPECT_GE(d.curvature_ratio(), 10.0);
  EXPECT_FALSE(d.closer_to_flat(d.sharp().center));
  EXPECT_TRUE(d.closer_to_flat(d.flat().center));
  // The flat well is the deeper basin.
  EXPECT_LT(d.eval(d.flat().center).loss, d.eval(d.sharp().center).loss);
}

TEST(Oracle, ReplayIsBitIdentical) {
  std::mt19937_64 rng(4);
  const QuadraticLandscape q = random_quadratic(rng, 2, 2);
  const StochasticGradientOracle a(q, 0.3, 100.0, 17);
  const StochasticGradientOracle b(q, 0.3, 100.0, 17);
  const Matrix w = random_normal(2, 2, rng);
  EXPECT_EQ(a.noisy_grad(w, 5), b.noisy_grad(w, 5));
  EXPECT_EQ(a.noisy_grad(w, 5), a.noisy_grad(w, 5));
  EXPECT_NE(a.noisy_grad(w, 5), a.noisy_grad(w, 6));
  EXPECT_NE(a.noisy_grad(w, 5), a.with_seed(18).noisy_grad(w, 5));
}

TEST(Oracle, NoiseHasRequestedScale) {
  // Per-entry standard deviation sigma / sqrt(numel), so E||noise||^2 = sigma^2.
  const QuadraticLandscape q = QuadraticLandscape::diagonal(Matrix(2, 2), {1.0, 1.0, 1.0, 1.0});
  const StochasticGradientOracle o(q, 0.5, 1e6, 3);
  double sum = 0.0;
  const int n = 20000;
  for (int k = 0; k < n; ++k) sum += squared_norm(o.noisy_grad(Matrix(2, 2), k));
  EXPECT_NEAR(sum / n, 0.25, 0.01);
}

TEST(Oracle, ClippingBoundsEveryDraw) {
  const QuadraticLandscape q = QuadraticLandscape::diagonal(Matrix(1, 3), {50.0, 50.0, 50.0});
  const StochasticGradientOracle o(q, 5.0, 2.0, 9);
  std::mt19937_64 rng(5);
  for (int k = 0; k < 2000; ++k) {
    ASSERT_LE(frobenius_norm(o.noisy_grad(random_normal(1, 3, rng) * 10.0, k)), 2.0);
  }
  Matrix g = Matrix::from_rows({{3.0, 4.0}});
  clip_frobenius(g, 1.0);
  EXPECT_LE(frobenius_norm(g), 1.0);
  EXPECT_NEAR(g[0], 0.6, 1e-12);
}

TEST(Driver, ShadowAccelerationEqualsMonaState) {
  const ConvergenceFixture fx;
  const QuadraticLandscape q = fx.landscape();
  const StochasticGradientOracle o(q, 0.1, 1e3, 2);
  const OptimizerConfig cfg = landscape_config(OptimizerKind::mona, 0.01);
  ParamGroup mirror("m", Matrix(1, 2, fx.init), ParamKind::matrix);
  std::uint64_t seen = 0;
  run_on_landscape(o, OptimizerKind::mona, cfg, Matrix(1, 2, fx.init), 50, [&](const LandscapeStep& s) {
    ASSERT_EQ(*s.weights, mirror.weights);
    ASSERT_EQ(*s.noisy_grad, o.noisy_grad(mirror.weights, s.step));
    mona_step(mirror, *s.noisy_grad, cfg);
    ASSERT_EQ(*s.accel, mirror.state.accel);
    ++seen;
  });
  EXPECT_EQ(seen, 50u);
}

TEST(Driver, RejectsAdamFamily) {
  const QuadraticLandscape q = QuadraticLandscape::diagonal(Matrix(1, 2), {1.0, 1.0});
  const StochasticGradientOracle o(q, 0.0, 1.0, 0);
  EXPECT_THROW(run_on_landscape(o, OptimizerKind::adamw, OptimizerConfig{}, Matrix(1, 2), 1),
               std::invalid_argument);
}

TEST(Escape, NoNoiseNoAccelerationStaysInSharpWell) {
  const DoubleWellLandscape d = DoubleWellLandscape::standard();
  const EscapeFixture fx;
  const std::vector<std::uint64_t> seeds{0, 1, 2};
  OptimizerConfig cfg = landscape_config(OptimizerKind::muon, fx.learning_rate);
  const EscapeResult r = escape_experiment(OptimizerKind::muon, cfg, d, 0.0, fx.clip_bound, seeds,
                                           fx.steps, EscapeStart::sharp);
  EXPECT_EQ(r.rate, 0.0);
  cfg = landscape_config(OptimizerKind::mona, fx.learning_rate);
  cfg.accel_alpha = 0.0;
  EXPECT_EQ(escape_experiment(OptimizerKind::mona, cfg, d, 0.0, fx.clip_bound, seeds, fx.steps,
                              EscapeStart::sharp).rate,
            0.0);
}

TEST(Escape, PairedComparisonOnStandardFixture) {
  const DoubleWellLandscape d = DoubleWellLandscape::standard();
  const EscapeFixture fx;
  std::vector<std::uint64_t> seeds(50);
  for (std::uint64_t i = 0; i < 50; ++i) seeds[i] = i;
  auto rate = [&](OptimizerKind k, EscapeStart s) {
    return escape_experiment(k, landscape_config(k, fx.learning_rate), d, fx.noise_sigma,
                             fx.clip_bound, seeds, fx.steps, s)
        .rate;
  };
  const double mona = rate(OptimizerKind::mona, EscapeStart::sharp);
  const double muon = rate(OptimizerKind::muon, EscapeStart::sharp);
  EXPECT_GE(mona, muon);
  EXPECT_LE(rate(OptimizerKind::mona, EscapeStart::flat), 0.1);
  EXPECT_LE(rate(OptimizerKind::muon, EscapeStart::flat), 0.1);
}
