// SPDX-License-Identifier: Apache-2.0
#include "mona/landscapes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mona {

namespace {

void check_eigs(const std::vector<double>& eigs, std::size_t numel) {
  if (eigs.size() != numel) {
    throw DimensionError("quadratic landscape: " + std::to_string(eigs.size()) +
                         " eigenvalues for " + std::to_string(numel) + " parameters");
  }
  for (double e : eigs) {
    if (!(e > 0.0) || !std::isfinite(e)) {
      throw std::invalid_argument("quadratic landscape: eigenvalues must be positive and finite");
    }
  }
}

double squared_distance(const Matrix& a, const Matrix& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

QuadraticLandscape::QuadraticLandscape(Matrix target, std::vector<double> eigs, Matrix basis)
    : target_(std::move(target)), eigs_(std::move(eigs)), basis_(std::move(basis)) {
  if (target_.empty()) throw DimensionError("quadratic landscape: empty target");
  const std::size_t n = target_.size();
  check_eigs(eigs_, n);
  if (basis_.rows() != n || basis_.cols() != n) {
    throw DimensionError("quadratic landscape: basis must be " + std::to_string(n) + " x " +
                         std::to_string(n) + ", got " + basis_.shape_string());
  }
  const Matrix qtq = matmul(transpose(basis_), basis_);
  if (max_abs_diff(qtq, Matrix::identity(n)) > 1e-10) {
    throw std::invalid_argument("quadratic landscape: basis is not orthogonal");
  }
  axis_aligned_ = basis_ == Matrix::identity(n);
}

QuadraticLandscape QuadraticLandscape::diagonal(Matrix target, std::vector<double> eigs) {
  const std::size_t n = target.size();
  return QuadraticLandscape(std::move(target), std::move(eigs), Matrix::identity(n));
}

QuadraticLandscape QuadraticLandscape::rotated(Matrix target, std::vector<double> eigs,
                                               std::mt19937_64& rng) {
  const std::size_t n = target.size();
  return QuadraticLandscape(std::move(target), std::move(eigs), random_orthogonal(n, rng));
}

double QuadraticLandscape::lambda_max() const {
  return *std::max_element(eigs_.begin(), eigs_.end());
}

double QuadraticLandscape::lambda_min() const {
  return *std::min_element(eigs_.begin(), eigs_.end());
}

std::vector<double> QuadraticLandscape::to_eigenbasis(const Matrix& x) const {
  require_same_shape(x, target_, "QuadraticLandscape::to_eigenbasis");
  const std::size_t n = x.size();
  std::vector<double> c(n, 0.0);
  if (axis_aligned_) {
    for (std::size_t i = 0; i < n; ++i) c[i] = x[i];
    return c;
  }
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += basis_(i, j) * x[i];
    c[j] = s;
  }
  return c;
}

LossGrad QuadraticLandscape::eval(const Matrix& w) const {
  require_same_shape(w, target_, "QuadraticLandscape::eval");
  const std::size_t n = w.size();
  Matrix diff = w - target_;
  // Coordinates in the eigenbasis keep the loss a sum of non-negative terms.
  const std::vector<double> c = to_eigenbasis(diff);
  LossGrad out{0.0, Matrix(w.rows(), w.cols())};
  std::vector<double> scaled(n);
  for (std::size_t i = 0; i < n; ++i) {
    scaled[i] = eigs_[i] * c[i];
    out.loss += scaled[i] * c[i];
  }
  out.loss *= 0.5;
  if (axis_aligned_) {
    for (std::size_t i = 0; i < n; ++i) out.grad[i] = scaled[i];
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += basis_(i, j) * scaled[j];
      out.grad[i] = s;
    }
  }
  return out;
}

DoubleWellLandscape::DoubleWellLandscape(Well sharp, Well flat)
    : sharp_(std::move(sharp)), flat_(std::move(flat)) {
  if (sharp_.center.empty() || !sharp_.center.same_shape(flat_.center)) {
    throw DimensionError("double well: centers must be non-empty and share a shape");
  }
  for (const Well* w : {&sharp_, &flat_}) {
    if (!(w->depth > 0.0) || !(w->width > 0.0)) {
      throw std::invalid_argument("double well: depths and widths must be positive");
    }
  }
}

DoubleWellLandscape DoubleWellLandscape::standard() {
  return DoubleWellLandscape(Well{Matrix::from_rows({{0.0, 0.0}}), 1.0, 0.2},
                             Well{Matrix::from_rows({{3.0, 0.0}}), 3.0, 1.5});
}

double DoubleWellLandscape::curvature_ratio() const {
  const double sharp = sharp_.depth / (sharp_.width * sharp_.width);
  const double flat = flat_.depth / (flat_.width * flat_.width);
  return sharp / flat;
}

bool DoubleWellLandscape::closer_to_flat(const Matrix& x) const {
  require_same_shape(x, sharp_.center, "DoubleWellLandscape::closer_to_flat");
  return squared_distance(x, flat_.center) < squared_distance(x, sharp_.center);
}

LossGrad DoubleWellLandscape::eval(const Matrix& x) const {
  require_same_shape(x, sharp_.center, "DoubleWellLandscape::eval");
  LossGrad out{0.0, Matrix(x.rows(), x.cols())};
  for (const Well* w : {&sharp_, &flat_}) {
    const double s2 = w->width * w->width;
    const double e = w->depth * std::exp(-squared_distance(x, w->center) / (2.0 * s2));
    out.loss -= e;
    for (std::size_t i = 0; i < x.size(); ++i) out.grad[i] += e * (x[i] - w->center[i]) / s2;
  }
  return out;
}

void clip_frobenius(Matrix& g, double bound) {
  double norm = frobenius_norm(g);
  if (norm <= bound) return;
  g *= bound / norm;
  // Rounding can leave the norm a few ulps above the bound.
  while ((norm = frobenius_norm(g)) > bound) g *= 1.0 - 4.0 * std::numeric_limits<double>::epsilon();
}

StochasticGradientOracle::StochasticGradientOracle(const Landscape& base, double noise_sigma,
                                                   double clip_bound, std::uint64_t seed)
    : base_(&base), sigma_(noise_sigma), clip_(clip_bound), seed_(seed) {
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw std::invalid_argument("noise sigma must be finite and >= 0");
  }
  if (!(clip_bound > 0.0)) throw std::invalid_argument("clip bound must be > 0");
}

Matrix StochasticGradientOracle::perturb(Matrix g, std::uint64_t step) const {
  if (sigma_ > 0.0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                      static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double scale = sigma_ / std::sqrt(static_cast<double>(g.size()));
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += scale * normal(rng);
  }
  clip_frobenius(g, clip_);
  return g;
}

Matrix StochasticGradientOracle::noisy_grad(const Matrix& w, std::uint64_t step) const {
  return perturb(base_->eval(w).grad, step);
}

StochasticGradientOracle StochasticGradientOracle::with_seed(std::uint64_t seed) const {
  return StochasticGradientOracle(*base_, sigma_, clip_, seed);
}

LandscapeRun run_on_landscape(const StochasticGradientOracle& oracle, OptimizerKind kind,
                              const OptimizerConfig& cfg, const Matrix& init, std::uint64_t steps,
                              const LandscapeObserver& observer) {
  if (kind != OptimizerKind::muon && kind != OptimizerKind::mona &&
      kind != OptimizerKind::mona_lite) {
    throw std::invalid_argument("run_on_landscape: only muon, mona and mona_lite are supported");
  }
  cfg.validate();
  const Landscape& land = oracle.base();
  if (init.rows() != land.rows() || init.cols() != land.cols()) {
    throw DimensionError("run_on_landscape: init " + init.shape_string() + " does not match landscape");
  }

  ParamGroup group("landscape", init, ParamKind::matrix);
  Matrix shadow_accel(init.rows(), init.cols());
  Matrix prev_grad(init.rows(), init.cols());
  Matrix diff(init.rows(), init.cols());
  Matrix direction;
  Matrix before;
  const double keep = 1.0 - cfg.accel_beta;

  for (std::uint64_t k = 1; k <= steps; ++k) {
    LossGrad exact = land.eval(group.weights);
    const Matrix grad = oracle.perturb(exact.grad, k);

    // Same expression order as the buffered MONA update, so for MONA the
    // shadow equals the optimizer's own A bit for bit.
    for (std::size_t i = 0; i < grad.size(); ++i) diff[i] = grad[i] - prev_grad[i];
    for (std::size_t i = 0; i < grad.size(); ++i) {
      shadow_accel[i] = cfg.accel_beta * shadow_accel[i] + keep * diff[i];
    }
    prev_grad = grad;

    if (observer) before = group.weights;
    StepTrace trace;
    switch (kind) {
      case OptimizerKind::muon: trace = muon_step(group, grad, cfg, &direction); break;
      case OptimizerKind::mona: trace = mona_step(group, grad, cfg, &direction); break;
      default: trace = mona_lite_step(group, grad, cfg, &direction); break;
    }
    if (observer) {
      LandscapeStep snap;
      snap.step = k;
      snap.loss = exact.loss;
      snap.weights = &before;
      snap.true_grad = &exact.grad;
      snap.noisy_grad = &grad;
      snap.accel = &shadow_accel;
      snap.direction = &direction;
      snap.trace = trace;
      observer(snap);
    }
  }
  LandscapeRun run;
  run.final_loss = land.eval(group.weights).loss;
  run.final_weights = group.weights;
  run.group = std::move(group);
  run.steps = steps;
  return run;
}

EscapeResult escape_experiment(OptimizerKind kind, const OptimizerConfig& cfg,
                               const DoubleWellLandscape& landscape, double noise_sigma,
                               double clip_bound, std::span<const std::uint64_t> seeds,
                               std::uint64_t steps, EscapeStart start) {
  if (seeds.empty()) throw std::invalid_argument("escape_experiment: no seeds");
  const StochasticGradientOracle oracle(landscape, noise_sigma, clip_bound, 0);
  const Matrix& init =
      start == EscapeStart::sharp ? landscape.sharp().center : landscape.flat().center;
  EscapeResult result;
  std::size_t count = 0;
  for (std::uint64_t seed : seeds) {
    const LandscapeRun run =
        run_on_landscape(oracle.with_seed(seed), kind, cfg, init, steps);
    const bool near_flat = landscape.closer_to_flat(run.final_weights);
    const bool escaped = start == EscapeStart::sharp ? near_flat : !near_flat;
    result.escaped.push_back(escaped);
    count += escaped ? 1 : 0;
  }
  result.rate = static_cast<double>(count) / static_cast<double>(seeds.size());
  return result;
}

}  // namespace mona
