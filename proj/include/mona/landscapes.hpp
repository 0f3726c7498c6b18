// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mona/matrix.hpp"
#include "mona/optimizers.hpp"

namespace mona {

struct LossGrad {
  double loss = 0.0;
  Matrix grad;
};

class Landscape {
 public:
  virtual ~Landscape() = default;
  virtual std::size_t rows() const = 0;
  virtual std::size_t cols() const = 0;
  virtual LossGrad eval(const Matrix& w) const = 0;
  virtual std::string kind() const = 0;
};

/// f(W) = 1/2 <W - W*, H (W - W*)> with H = Q diag(eigs) Q^T acting on the
/// row-major vectorization of W. f* = 0.
class QuadraticLandscape final : public Landscape {
 public:
  /// basis must be numel x numel and orthogonal; eigs must be positive.
  QuadraticLandscape(Matrix target, std::vector<double> eigs, Matrix basis);

  /// Axis-aligned Hessian (Q = I).
  static QuadraticLandscape diagonal(Matrix target, std::vector<double> eigs);
  /// Random orthogonal eigenbasis.
  static QuadraticLandscape rotated(Matrix target, std::vector<double> eigs, std::mt19937_64& rng);

  std::size_t rows() const override { return target_.rows(); }
  std::size_t cols() const override { return target_.cols(); }
  LossGrad eval(const Matrix& w) const override;
  std::string kind() const override { return "quadratic"; }

  const Matrix& target() const { return target_; }
  const std::vector<double>& eigs() const { return eigs_; }
  const Matrix& basis() const { return basis_; }
  double lambda_max() const;
  double lambda_min() const;

  /// Q^T vec(x), the coordinates of x in the eigenbasis.
  std::vector<double> to_eigenbasis(const Matrix& x) const;

 private:
  Matrix target_;
  std::vector<double> eigs_;
  Matrix basis_;
  bool axis_aligned_ = false;
};

/// f(x) = -A_s exp(-|x - c_s|^2 / (2 s_s^2)) - A_f exp(-|x - c_f|^2 / (2 s_f^2)).
/// Curvature at a well center is about depth / width^2.
class DoubleWellLandscape final : public Landscape {
 public:
  struct Well {
    Matrix center;
    double depth = 1.0;
    double width = 1.0;
  };

  DoubleWellLandscape(Well sharp, Well flat);

  /// 1 x 2 fixture used by the escape experiments: sharp well at the origin
  /// (depth 1, width 0.2), flat well at (3, 0) (depth 3, width 1.5).
  static DoubleWellLandscape standard();

  std::size_t rows() const override { return sharp_.center.rows(); }
  std::size_t cols() const override { return sharp_.center.cols(); }
  LossGrad eval(const Matrix& x) const override;
  std::string kind() const override { return "double_well"; }

  const Well& sharp() const { return sharp_; }
  const Well& flat() const { return flat_; }
  double curvature_ratio() const;
  /// True if x is strictly closer to the flat center than to the sharp one.
  bool closer_to_flat(const Matrix& x) const;

 private:
  Well sharp_;
  Well flat_;
};

/// Exact gradient plus Gaussian noise of total variance sigma^2 (per entry
/// sigma / sqrt(numel)), then Frobenius-clipped to clip_bound. Each draw is a
/// pure function of (seed, step).
class StochasticGradientOracle {
 public:
  StochasticGradientOracle(const Landscape& base, double noise_sigma, double clip_bound,
                           std::uint64_t seed);

  Matrix noisy_grad(const Matrix& w, std::uint64_t step) const;
  /// Adds the step's noise draw to an exact gradient and clips it.
  Matrix perturb(Matrix exact_grad, std::uint64_t step) const;

  StochasticGradientOracle with_seed(std::uint64_t seed) const;
  const Landscape& base() const { return *base_; }
  double noise_sigma() const { return sigma_; }
  double clip_bound() const { return clip_; }
  std::uint64_t seed() const { return seed_; }

 private:
  const Landscape* base_;
  double sigma_;
  double clip_;
  std::uint64_t seed_;
};

/// Scales g in place so that ||g||_F <= bound holds exactly in floating point.
void clip_frobenius(Matrix& g, double bound);

/// Snapshot handed to a run observer after step k; `weights` is W_k as it was
/// before the update.
struct LandscapeStep {
  std::uint64_t step = 0;  // k, starting at 1
  double loss = 0.0;       // f(W_k)
  const Matrix* weights = nullptr;
  const Matrix* true_grad = nullptr;
  const Matrix* noisy_grad = nullptr;
  /// A_k as tracked by the driver: the optimizer's own A for MONA, a shadow
  /// EMA of gradient differences for Muon.
  const Matrix* accel = nullptr;
  const Matrix* direction = nullptr;  // O_k
  StepTrace trace;
};

using LandscapeObserver = std::function<void(const LandscapeStep&)>;

struct LandscapeRun {
  /// Final parameter with its optimizer state.
  ParamGroup group;
  Matrix final_weights;
  double final_loss = 0.0;
  std::uint64_t steps = 0;
};

/// Runs a Muon-family optimizer on a single matrix parameter for `steps`
/// steps, drawing G_k = oracle.noisy_grad(W_k, k). The parameter is treated as
/// a matrix whatever its shape. Only muon, mona and mona_lite are accepted.
LandscapeRun run_on_landscape(const StochasticGradientOracle& oracle, OptimizerKind kind,
                              const OptimizerConfig& cfg, const Matrix& init, std::uint64_t steps,
                              const LandscapeObserver& observer = {});

enum class EscapeStart { sharp, flat };

struct EscapeResult {
  double rate = 0.0;
  std::vector<bool> escaped;
};

/// Fraction of seeds whose final iterate lies closer to the other well's
/// center than to the starting one. Starting in the sharp well, this is the
/// sharp-to-flat escape rate; starting in the flat well, flat-to-sharp.
EscapeResult escape_experiment(OptimizerKind kind, const OptimizerConfig& cfg,
                               const DoubleWellLandscape& landscape, double noise_sigma,
                               double clip_bound, std::span<const std::uint64_t> seeds,
                               std::uint64_t steps, EscapeStart start = EscapeStart::sharp);

}  // namespace mona
