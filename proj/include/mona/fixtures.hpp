// SPDX-License-Identifier: Apache-2.0
#pragma once

// Standard experiment fixtures shared by the check suite, the acceptance
// tests and the shipped example configs.

#include <cstdint>
#include <random>
#include <vector>

#include "mona/analysis.hpp"
#include "mona/experiment.hpp"
#include "mona/landscapes.hpp"

namespace mona {

/// Settings for single-parameter landscape runs: mu 0.95, beta_a 0.99,
/// alpha = sign * default_alpha(beta_a) for MONA (0 for Muon), no weight decay.
OptimizerConfig landscape_config(OptimizerKind kind, double learning_rate, double alpha_sign = 1.0);

/// Sharp-to-flat escape on DoubleWellLandscape::standard().
struct EscapeFixture {
  double noise_sigma = 1.5;
  double clip_bound = 20.0;
  double learning_rate = 0.3;
  std::uint64_t steps = 500;
};

/// Acceleration along eigendirections of diag(100, 1) on a 1 x 2 parameter.
struct AccelDirectionFixture {
  std::vector<double> eigs{100.0, 1.0};
  std::vector<double> init{1.0, 1.0};
  double noise_sigma = 0.01;
  double learning_rate = 3e-3;
  std::uint64_t steps = 2000;
  QuadraticLandscape landscape() const;
};

/// Convergence-bound fixture: diag(4, 1) on a 1 x 2 parameter.
struct ConvergenceFixture {
  std::vector<double> eigs{4.0, 1.0};
  std::vector<double> init{20.0, 20.0};
  double noise_sigma = 0.1;
  double learning_rate = 0.01;
  std::uint64_t steps = 10000;
  std::uint64_t burn_in = 10;
  double rate_eta_scale = 1.0;
  std::uint64_t rate_short = 2500;
  std::uint64_t rate_long = 10000;
  QuadraticLandscape landscape() const;
  ConvergenceSetup setup(std::uint64_t seed) const;
};

/// Random matrix with both dims in [1, max_dim], full rank r = min(m, n) <= 25
/// and Frobenius-normalized singular values in [0.2, 1] (sum of squares 1).
Matrix random_ns_fixture(std::mt19937_64& rng, std::size_t max_dim = 32);

/// bf16-streaming MONA-Lite against fp32 MONA on a rotated 8 x 4 quadratic
/// (eigenvalues in [1, 10], sigma 0.1): mean final ||W - W*||_F over seeds.
struct Bf16AccuracyResult {
  double fp32_error = 0.0;
  double bf16_error = 0.0;
  double relative_gap = 0.0;
};
Bf16AccuracyResult bf16_accuracy_experiment(std::size_t seeds, std::uint64_t steps = 2000,
                                            double learning_rate = 0.01);

/// Four-optimizer teacher-student comparison (AdamW, AdamW-Acc, Muon, MONA)
/// on a 4-16-16-4 tanh net at a shared learning rate.
ExperimentConfig toynet_comparison_config(std::vector<std::uint64_t> seeds, std::uint64_t steps,
                                          double learning_rate = 0.01);

}  // namespace mona
