// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mona/fixtures.hpp"
#include "mona/orthogonalize.hpp"
#include "mona/svd.hpp"
#include "oracles.hpp"

using namespace mona;

TEST(NewtonSchulz, ScalarTrajectoryFromHalfDiagonal) {
  // diag(0.5, 0.5) normalizes to 1/sqrt(2) on each entry.
  const double expected = oracle::ns_scalar(1.0 / std::sqrt(2.0));
  EXPECT_NEAR(expected, 1.10811, 1e-5);
  EXPECT_NEAR(expected, 1.1085, 1e-3);
  const NsResult r = newton_schulz(Matrix::from_rows({{0.5, 0.0}, {0.0, 0.5}}));
  EXPECT_FALSE(r.degenerate);
  EXPECT_NEAR(r.output(0, 0), expected, 1e-14);
  EXPECT_NEAR(r.output(1, 1), expected, 1e-14);
  EXPECT_EQ(r.output(0, 1), 0.0);
}

TEST(NewtonSchulz, DiagonalInputsFollowTheScalarRecurrence) {
  const Matrix d = Matrix::from_rows({{0.6, 0.0}, {0.0, 0.8}});
  const Matrix o = newton_schulz(d).output;
  EXPECT_NEAR(o(0, 0), oracle::ns_scalar(0.6), 1e-14);
  EXPECT_NEAR(o(1, 1), oracle::ns_scalar(0.8), 1e-14);
  EXPECT_NEAR(o(0, 0), 0.72288, 1e-5);
  EXPECT_NEAR(o(1, 1), 1.11920, 1e-5);
}

TEST(NewtonSchulz, RankOneMapsToScalarImageOfOne) {
  std::mt19937_64 rng(1);
  const Matrix u = random_normal(6, 1, rng);
  const Matrix v = random_normal(1, 4, rng);
  const SvdResult s = svd_oracle(newton_schulz(matmul(u, v)).output);
  EXPECT_NEAR(s.sigma[0], oracle::ns_scalar(1.0), 1e-12);
  EXPECT_NEAR(s.sigma[0], 0.69644, 1e-5);
}

TEST(NewtonSchulz, ScalarBandOverUnitInterval) {
  double lo = 1e9, hi = 0.0;
  for (int i = 0; i <= 8000; ++i) {
    const double y = oracle::ns_scalar(0.2 + 0.8 * i / 8000.0);
    lo = std::min(lo, y);
    hi = std::max(hi, y);
  }
  EXPECT_NEAR(lo, 0.6818, 1e-3);
  EXPECT_NEAR(hi, 1.1344, 1e-3);
  EXPECT_GE(lo, 0.5);
  EXPECT_LE(hi, 1.4);
}

TEST(NewtonSchulz, MatchesReferenceIterationInBothOrientations) {
  std::mt19937_64 rng(2);
  for (auto [r, c] : {std::pair<std::size_t, std::size_t>{3, 8}, {8, 3}, {5, 5}, {1, 7}, {9, 1}}) {
    const Matrix m = random_normal(r, c, rng);
    EXPECT_LE(max_abs_diff(newton_schulz(m).output, oracle::reference_ns(m)), 1e-12) << r << "x" << c;
  }
}

TEST(NewtonSchulz, TransposeEquivariance) {
  std::mt19937_64 rng(3);
  const Matrix m = random_normal(4, 9, rng);
  // Equal up to the summation order of the normalizing norm.
  EXPECT_LE(max_abs_diff(newton_schulz(transpose(m)).output, transpose(newton_schulz(m).output)), 1e-14);
}

TEST(NewtonSchulz, ScaleInvariant) {
  std::mt19937_64 rng(4);
  const Matrix m = random_normal(6, 5, rng);
  EXPECT_LE(max_abs_diff(newton_schulz(m * 37.5).output, newton_schulz(m).output), 1e-12);
}

TEST(NewtonSchulz, DegenerateInputGivesZerosAndFlag) {
  const NsResult zero = newton_schulz(Matrix(3, 4));
  EXPECT_TRUE(zero.degenerate);
  EXPECT_EQ(zero.output, Matrix(3, 4));
  Matrix tiny(2, 2);
  tiny(0, 0) = 1e-13;
  EXPECT_TRUE(newton_schulz(tiny).degenerate);
  EXPECT_THROW(newton_schulz(Matrix()), DimensionError);
}

TEST(NewtonSchulz, OutputEqualsPolynomialOfSingularValues) {
  // O = U p(S / ||S||) V^T with p the five-step scalar map.
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    const Matrix m = random_ns_fixture(rng, 12);
    const SvdResult s = svd_oracle(m);
    double norm = 0.0;
    for (double x : s.sigma) norm += x * x;
    norm = std::sqrt(norm);
    Matrix us = s.u;
    for (std::size_t i = 0; i < us.rows(); ++i) {
      for (std::size_t j = 0; j < s.sigma.size(); ++j) us(i, j) *= oracle::ns_scalar(s.sigma[j] / norm);
    }
    EXPECT_LE(max_abs_diff(newton_schulz(m).output, matmul(us, transpose(s.v))), 1e-11);
  }
}

TEST(NewtonSchulz, BandAndSubspaceOnNormalizedSpectra) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 100; ++t) {
    const Matrix m = random_ns_fixture(rng);
    const NsReport r = ns_diagnostics(m);
    ASSERT_EQ(r.rank, std::min(m.rows(), m.cols()));
    EXPECT_GE(r.sv_min, 0.5);
    EXPECT_LE(r.sv_max, 1.4);
    EXPECT_LE(r.max_principal_angle, 1e-6);
  }
}

TEST(NewtonSchulz, PerturbedCoefficientsLeaveTheBand) {
  NsConfig bad;
  bad.coeff_a *= 1.1;
  bad.coeff_b *= 1.1;
  bad.coeff_c *= 1.1;
  std::mt19937_64 rng(7);
  double lo = 1e9, hi = 0.0;
  for (int t = 0; t < 100; ++t) {
    const NsReport r = ns_diagnostics(random_ns_fixture(rng), bad);
    lo = std::min(lo, r.sv_min);
    hi = std::max(hi, r.sv_max);
  }
  EXPECT_TRUE(lo < 0.5 || hi > 1.4) << lo << " " << hi;
}

TEST(NsFixture, GeneratorHonorsItsContract) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 200; ++t) {
    const Matrix m = random_ns_fixture(rng);
    ASSERT_LE(m.rows(), 32u);
    ASSERT_LE(m.cols(), 32u);
    const SvdResult s = svd_oracle(m);
    EXPECT_NEAR(frobenius_norm(m), 1.0, 1e-12);
    for (std::size_t i = 0; i < std::min(m.rows(), m.cols()); ++i) {
      EXPECT_GE(s.sigma[i], 0.2 - 1e-12);
      EXPECT_LE(s.sigma[i], 1.0 + 1e-12);
    }
  }
}

TEST(NsConfig, Validation) {
  NsConfig c;
  c.steps = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = NsConfig{};
  c.coeff_b = std::nan("");
  EXPECT_THROW(c.validate(), std::invalid_argument);
}
