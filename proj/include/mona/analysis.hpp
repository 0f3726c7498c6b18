// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mona/landscapes.hpp"
#include "mona/optimizers.hpp"

namespace mona {

// ---------------------------------------------------------------------------
// Boundedness of A, G~ and M.
//
// With G_max the running maximum of ||G_j||_F over j <= k:
//   ||A_k|| <= 2 G_max,  ||G~_k|| <= G_max (1 + 2|alpha|),
//   ||M_k|| <= G_max (1 + 2|alpha|) / (1 - mu).

struct NormSample {
  std::uint64_t step = 0;
  double grad_norm = 0.0;
  double accel_norm = 0.0;
  double accel_grad_norm = 0.0;
  double momentum_norm = 0.0;
};

NormSample norm_sample(std::uint64_t step, const StepTrace& trace);

struct LemmaViolation {
  std::uint64_t step = 0;
  std::string bound;  // "accel", "accel_grad" or "momentum"
  double value = 0.0;
  double limit = 0.0;
};

struct LemmaSettings {
  double alpha = 0.0;
  double momentum = 0.95;
  bool check_accel = true;
  bool check_momentum = true;
  /// Allowed excess: value <= limit + slack * max(1, limit).
  double slack = 1e-9;
};

/// Settings for a route: acceleration bounds only where A exists, momentum
/// bound only for the orthogonalized family, alpha = 0 for Muon. bf16 storage
/// of A and the gradient slot widens the slack to the bf16 rounding step.
LemmaSettings lemma_settings_for(StepRoute route, const OptimizerConfig& cfg);

/// Online form: feed traces of one parameter in step order.
class LemmaMonitor {
 public:
  explicit LemmaMonitor(LemmaSettings settings) : settings_(settings) {}

  /// Returns the violations found at this step (usually none).
  std::vector<LemmaViolation> observe(const NormSample& s);
  double grad_max() const { return grad_max_; }
  std::size_t steps() const { return steps_; }
  std::size_t violation_count() const { return violations_; }

 private:
  LemmaSettings settings_;
  double grad_max_ = 0.0;
  std::size_t steps_ = 0;
  std::size_t violations_ = 0;
};

struct LemmaReport {
  std::size_t steps_checked = 0;
  std::vector<LemmaViolation> violations;
  bool ok() const { return violations.empty(); }
};

/// Checks one parameter's trace stream; samples must be in step order.
LemmaReport check_lemma_bounds(std::span<const NormSample> samples, const LemmaSettings& settings);

// ---------------------------------------------------------------------------
// Directional alignment <grad f, O> >= rho ||grad f||^2.

struct AlignmentReport {
  double rho_hat = 0.0;  // min ratio after burn-in
  double mean_ratio = 0.0;
  double positive_fraction = 0.0;
  std::size_t steps_used = 0;
  std::size_t steps_excluded = 0;  // ||grad f|| below 1e-10
};

class AlignmentProbe {
 public:
  explicit AlignmentProbe(std::uint64_t burn_in) : burn_in_(burn_in) {}
  void observe(std::uint64_t step, const Matrix& true_grad, const Matrix& direction);
  AlignmentReport report() const;

 private:
  std::uint64_t burn_in_;
  double min_ratio_ = 0.0;
  double sum_ratio_ = 0.0;
  std::size_t positive_ = 0;
  std::size_t used_ = 0;
  std::size_t excluded_ = 0;
};

/// Runs kind/cfg on the landscape and measures alignment against the exact
/// gradient.
AlignmentReport estimate_alignment(const StochasticGradientOracle& oracle, OptimizerKind kind,
                                   const OptimizerConfig& cfg, const Matrix& init,
                                   std::uint64_t steps, std::uint64_t burn_in);

// ---------------------------------------------------------------------------
// Non-convex convergence bound.

struct BoundEstimate {
  double smoothness = 0.0;   // L
  double rho = 0.0;
  double grad_max = 0.0;     // G
  double capped_ortho_sq = 0.0;  // C_m
  std::size_t rank = 0;
  double gamma = 0.0;
  double g_bar = 0.0;  // G (1 + 2|alpha|)
  double c1 = 0.0;     // G_bar / (1 - mu); computed but unused by the bound
  double c2 = 0.0;     // L gamma^2 C_m / 2
  double c3 = 0.0;     // rho gamma
  double c4 = 0.0;     // gamma^2 C_m / 2
};

/// C_m is the observed max ||O||_F^2, raised to at least min(rows, cols).
BoundEstimate make_bound_estimate(double smoothness, double rho, double grad_max,
                                  double max_ortho_sq, std::size_t rows, std::size_t cols,
                                  double gamma, double momentum, double alpha);

/// (f(W_0) - f*) / (eta C3 K) + eta L C4 / C3.
double convergence_bound_rhs(const BoundEstimate& est, double eta, double initial_gap,
                             std::uint64_t steps);

enum class CheckStatus { pass, fail, skipped };
std::string_view to_string(CheckStatus s);

struct ConvergenceReport {
  CheckStatus status = CheckStatus::skipped;
  std::string reason;
  BoundEstimate estimate;
  AlignmentReport alignment;
  double eta = 0.0;
  double eta_limit = 0.0;  // min(1/L, C3/C2)
  bool step_condition = false;
  double initial_gap = 0.0;  // f at the start of the measured window minus f*
  std::uint64_t steps = 0;   // K, the measured window length
  double lhs = 0.0;          // mean ||grad f||^2 over the window
  double rhs = 0.0;
};

struct ConvergenceSetup {
  double noise_sigma = 0.1;
  double clip_bound = 1e3;
  std::uint64_t seed = 0;
  Matrix init;
  std::uint64_t steps = 10000;
  /// Steps before the measured window. Alignment is taken over the window
  /// and the bound is applied from W_burn_in on.
  std::uint64_t burn_in = 10;
};

/// Runs kind/cfg on a quadratic and tests the bound with L = lambda_max,
/// measured rho and observed G and C_m. Skipped if rho_hat <= 0; fails if
/// the step-size condition does not hold or LHS > RHS.
ConvergenceReport check_convergence_bound(const QuadraticLandscape& landscape,
                                          OptimizerKind kind, const OptimizerConfig& cfg,
                                          const ConvergenceSetup& setup);

struct RateProbe {
  std::uint64_t short_steps = 0;
  std::uint64_t long_steps = 0;
  double short_avg = 0.0;
  double long_avg = 0.0;
  double ratio = 0.0;  // long_avg / short_avg
  bool pass = false;   // ratio <= 1 / 1.3
};

/// Two runs with eta = scale / sqrt(K) at K = short and long step counts,
/// comparing the mean squared gradient norm over each window.
RateProbe rate_probe(const QuadraticLandscape& landscape, OptimizerKind kind,
                     OptimizerConfig cfg, const ConvergenceSetup& setup, double eta_scale,
                     std::uint64_t short_steps, std::uint64_t long_steps);

// ---------------------------------------------------------------------------
// Acceleration along Hessian eigendirections.

struct EigenAccelStat {
  std::vector<double> mean_abs;  // time-averaged |Q^T A_k| per eigendirection
  double sharp_to_flat = 0.0;    // ratio for the largest vs smallest eigenvalue
  std::uint64_t steps = 0;
};

class EigenAccelProbe {
 public:
  explicit EigenAccelProbe(const QuadraticLandscape& landscape) : land_(&landscape) {}
  void observe(const Matrix& accel);
  EigenAccelStat stat() const;

 private:
  const QuadraticLandscape* land_;
  std::vector<double> sum_abs_;
  std::uint64_t steps_ = 0;
};

/// Runs kind/cfg on the quadratic and averages |Q^T A_k|. For Muon the
/// driver's shadow A is used, so the statistic exists with alpha = 0 too.
EigenAccelStat escape_direction_stat(const StochasticGradientOracle& oracle,
                                     const QuadraticLandscape& landscape, OptimizerKind kind,
                                     const OptimizerConfig& cfg, const Matrix& init,
                                     std::uint64_t steps);

// ---------------------------------------------------------------------------
// Verification report.

struct CheckResult {
  std::string name;
  CheckStatus status = CheckStatus::pass;
  std::string detail;
  std::vector<std::pair<std::string, double>> numbers;
};

struct VerificationReport {
  std::vector<CheckResult> checks;

  void add(CheckResult r) { checks.push_back(std::move(r)); }
  /// True if no check failed.
  bool ok() const;
  std::vector<std::string> failures() const;
  std::string to_json() const;
  std::string to_text() const;
};

}  // namespace mona
