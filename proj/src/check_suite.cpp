// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "mona/fixtures.hpp"
#include "mona/svd.hpp"

namespace mona {

OptimizerConfig landscape_config(OptimizerKind kind, double learning_rate, double alpha_sign) {
  OptimizerConfig c;
  c.learning_rate = learning_rate;
  c.momentum = 0.95;
  c.accel_beta = 0.99;
  c.accel_alpha = kind == OptimizerKind::muon ? 0.0 : alpha_sign * default_alpha(c.accel_beta);
  c.weight_decay = 0.0;
  if (kind == OptimizerKind::mona_lite) c.precision = Precision::bf16_streaming;
  return c;
}

QuadraticLandscape AccelDirectionFixture::landscape() const {
  return QuadraticLandscape::diagonal(Matrix(1, eigs.size()), eigs);
}

QuadraticLandscape ConvergenceFixture::landscape() const {
  return QuadraticLandscape::diagonal(Matrix(1, eigs.size()), eigs);
}

ConvergenceSetup ConvergenceFixture::setup(std::uint64_t seed) const {
  ConvergenceSetup s;
  s.noise_sigma = noise_sigma;
  s.clip_bound = 1e3;
  s.seed = seed;
  s.init = Matrix(1, init.size(), init);
  s.steps = steps;
  s.burn_in = burn_in;
  return s;
}

Matrix random_ns_fixture(std::mt19937_64& rng, std::size_t max_dim) {
  if (max_dim < 1) throw std::invalid_argument("random_ns_fixture: max_dim must be >= 1");
  std::uniform_int_distribution<std::size_t> dim(1, max_dim);
  std::size_t m = 0, n = 0;
  // Rank r = min(m, n) with every normalized value >= 0.2 needs r <= 25.
  do {
    m = dim(rng);
    n = dim(rng);
  } while (std::min(m, n) > 25);
  const std::size_t r = std::min(m, n);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  // Spaced positive weights keep the spectrum well separated.
  std::vector<double> weights(r);
  double total = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    weights[i] = static_cast<double>(i) + 1.0 + 0.5 * unif(rng);
    total += weights[i];
  }
  const double spare = 1.0 - 0.04 * static_cast<double>(r);
  std::vector<double> sigma(r);
  for (std::size_t i = 0; i < r; ++i) sigma[i] = std::sqrt(0.04 + spare * weights[i] / total);
  std::shuffle(sigma.begin(), sigma.end(), rng);
  Matrix us = random_orthonormal_columns(m, r, rng);
  const Matrix v = random_orthonormal_columns(n, r, rng);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < r; ++j) us(i, j) *= sigma[j];
  }
  return matmul(us, transpose(v));
}

Bf16AccuracyResult bf16_accuracy_experiment(std::size_t seeds, std::uint64_t steps, double learning_rate) {
  std::mt19937_64 rng(5);
  std::vector<double> eigs(32);
  std::uniform_real_distribution<double> u(1.0, 10.0);
  for (double& e : eigs) e = u(rng);
  const Matrix target = random_normal(8, 4, rng);
  const QuadraticLandscape land = QuadraticLandscape::rotated(target, eigs, rng);
  Matrix init = target;
  init += random_normal(8, 4, rng);
  const OptimizerConfig fp32 = landscape_config(OptimizerKind::mona, learning_rate);
  const OptimizerConfig bf16 = landscape_config(OptimizerKind::mona_lite, learning_rate);
  Bf16AccuracyResult r;
  for (std::uint64_t seed = 0; seed < seeds; ++seed) {
    const StochasticGradientOracle oracle(land, 0.1, 1e3, seed);
    r.fp32_error += frobenius_norm(run_on_landscape(oracle, OptimizerKind::mona, fp32, init, steps).final_weights - target);
    r.bf16_error += frobenius_norm(run_on_landscape(oracle, OptimizerKind::mona_lite, bf16, init, steps).final_weights - target);
  }
  r.fp32_error /= static_cast<double>(seeds);
  r.bf16_error /= static_cast<double>(seeds);
  r.relative_gap = std::abs(r.bf16_error - r.fp32_error) / r.fp32_error;
  return r;
}

ExperimentConfig toynet_comparison_config(std::vector<std::uint64_t> seeds, std::uint64_t steps,
                                          double learning_rate) {
  ExperimentConfig cfg;
  cfg.name = "toynet_comparison";
  cfg.task.type = TaskType::teacher_student;
  cfg.steps = steps;
  cfg.seeds = std::move(seeds);
  cfg.eval_every = std::max<std::uint64_t>(1, steps / 10);
  cfg.write_checkpoints = false;
  for (OptimizerKind k : {OptimizerKind::adamw, OptimizerKind::adamw_acc, OptimizerKind::muon,
                          OptimizerKind::mona}) {
    OptimizerSpec s;
    s.kind = k;
    s.name = std::string(to_string(k));
    s.config.learning_rate = learning_rate;
    s.config.weight_decay = 0.1;
    s.config.accel_beta = 0.99;
    s.config.accel_alpha = default_alpha(0.99);
    s.adam.weight_decay = 0.0;
    cfg.optimizers.push_back(s);
  }
  return cfg;
}

namespace {

CheckResult make(std::string name, bool ok, std::string detail,
                 std::vector<std::pair<std::string, double>> numbers = {}) {
  return CheckResult{std::move(name), ok ? CheckStatus::pass : CheckStatus::fail, std::move(detail),
                     std::move(numbers)};
}

NsConfig scaled_ns(double scale) {
  NsConfig ns;
  ns.coeff_a *= scale;
  ns.coeff_b *= scale;
  ns.coeff_c *= scale;
  return ns;
}

CheckResult check_ns_scalar(const NsConfig& ns) {
  const Matrix m = Matrix::from_rows({{0.5, 0.0}, {0.0, 0.5}});
  const Matrix o = newton_schulz(m, ns).output;
  const double diag = o(0, 0);
  const bool ok = std::abs(diag - 1.1085) <= 1e-3 && o(0, 1) == 0.0 && o(1, 0) == 0.0 && o(1, 1) == diag;
  return make("ns_scalar_trajectory", ok, "diag(0.5, 0.5) after 5 steps vs 1.1085 +- 1e-3",
              {{"output", diag}});
}

CheckResult check_ns_band(const NsConfig& ns, std::size_t count) {
  std::mt19937_64 rng(20240601);
  double lo = 1e9, hi = 0.0, worst_angle = 0.0;
  for (std::size_t t = 0; t < count; ++t) {
    const Matrix m = random_ns_fixture(rng);
    const NsReport rep = ns_diagnostics(m, ns);
    lo = std::min(lo, rep.sv_min);
    hi = std::max(hi, rep.sv_max);
    worst_angle = std::max(worst_angle, rep.max_principal_angle);
  }
  const bool ok = lo >= 0.5 && hi <= 1.4 && worst_angle <= 1e-6;
  return make("ns_band_and_subspace", ok,
              std::to_string(count) + " random matrices, normalized spectra in [0.2, 1]: band [0.5, 1.4], angles <= 1e-6",
              {{"sv_min", lo}, {"sv_max", hi}, {"max_angle", worst_angle}});
}

CheckResult check_reduction(std::size_t fixtures) {
  std::mt19937_64 rng(7);
  std::size_t mismatches = 0;
  for (std::size_t f = 0; f < fixtures; ++f) {
    OptimizerConfig cfg;
    cfg.accel_alpha = 0.0;
    const Matrix w = random_normal(5, 3, rng);
    ParamGroup a("w", w, ParamKind::matrix);
    ParamGroup b("w", w, ParamKind::matrix);
    for (int k = 0; k < 20; ++k) {
      const Matrix g = random_normal(5, 3, rng);
      mona_step(a, g, cfg);
      muon_step(b, g, cfg);
    }
    mismatches += a.weights == b.weights ? 0 : 1;
  }
  return make("reduction_alpha_zero", mismatches == 0,
              "MONA with alpha = 0 vs Muon, bitwise over 20-step sequences",
              {{"fixtures", static_cast<double>(fixtures)}, {"mismatches", static_cast<double>(mismatches)}});
}

CheckResult check_streaming() {
  std::mt19937_64 rng(11);
  OptimizerConfig buffered;
  OptimizerConfig streaming = buffered;
  streaming.precision = Precision::fp32_streaming;
  const Matrix w = random_normal(6, 4, rng);
  ParamGroup a("w", w, ParamKind::matrix);
  ParamGroup b("w", w, ParamKind::matrix);
  for (int k = 0; k < 50; ++k) {
    const Matrix g = random_normal(6, 4, rng);
    mona_step(a, g, buffered);
    mona_lite_step(b, g, streaming);
  }
  const double ratio = 1.0 - static_cast<double>(auxiliary_state_bytes(Precision::bf16_streaming, 1000)) /
                                 static_cast<double>(auxiliary_state_bytes(Precision::fp32_buffered, 1000));
  const bool ok = a.weights == b.weights && ratio == 0.75;
  return make("streaming_equivalence", ok,
              "fp32 streaming bitwise equal to buffered over 50 steps; bf16 auxiliary bytes 75% below buffered",
              {{"memory_reduction", ratio}});
}

CheckResult check_bf16_accuracy(std::size_t seeds) {
  const Bf16AccuracyResult r = bf16_accuracy_experiment(seeds);
  return make("bf16_streaming_accuracy", r.relative_gap <= 0.05,
              "mean final distance to the minimizer within 5% of fp32 MONA (32-dim rotated quadratic)",
              {{"fp32_error", r.fp32_error}, {"bf16_error", r.bf16_error}, {"relative_gap", r.relative_gap}});
}

template <typename F>
double fd_max_error(const Matrix& w, const Matrix& analytic, F&& loss) {
  const double h = 1e-5;
  double worst = 0.0;
  Matrix p = w;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double keep = p[i];
    p[i] = keep + h;
    const double up = loss(p);
    p[i] = keep - h;
    const double down = loss(p);
    p[i] = keep;
    worst = std::max(worst, std::abs((up - down) / (2.0 * h) - analytic[i]));
  }
  return worst;
}

CheckResult check_gradients(std::size_t points) {
  std::mt19937_64 rng(99);
  double worst = 0.0;
  std::vector<double> eigs(12);
  std::uniform_real_distribution<double> u(0.5, 5.0);
  for (double& e : eigs) e = u(rng);
  const QuadraticLandscape quad = QuadraticLandscape::rotated(random_normal(3, 4, rng), eigs, rng);
  const DoubleWellLandscape well = DoubleWellLandscape::standard();
  for (std::size_t t = 0; t < points; ++t) {
    const Matrix wq = random_normal(3, 4, rng);
    worst = std::max(worst, fd_max_error(wq, quad.eval(wq).grad, [&](const Matrix& p) { return quad.eval(p).loss; }));
    Matrix wd = random_uniform(1, 2, -1.0, 4.0, rng);
    worst = std::max(worst, fd_max_error(wd, well.eval(wd).grad, [&](const Matrix& p) { return well.eval(p).loss; }));
  }
  for (std::size_t t = 0; t < points; ++t) {
    Mlp net(MlpSpec{{4, 8, 4}, Activation::tanh, 1000 + t, 0.8});
    const Matrix x = random_normal(5, 4, rng);
    const Matrix y = random_normal(5, 4, rng);
    std::vector<Matrix> grads;
    net.forward_backward(x, y, grads);
    for (std::size_t p = 0; p < grads.size(); ++p) {
      const Matrix w = net.params()[p].weights;
      worst = std::max(worst, fd_max_error(w, grads[p], [&](const Matrix& trial) {
                         net.params()[p].weights = trial;
                         const double l = net.loss(x, y);
                         net.params()[p].weights = w;
                         return l;
                       }));
    }
  }
  return make("gradients_vs_finite_differences", worst <= 1e-5,
              "analytic gradients vs central differences (h = 1e-5), max abs error <= 1e-5",
              {{"max_abs_error", worst}});
}

CheckResult check_lemma_fixtures(double alpha_sign, bool quick) {
  std::size_t steps = 0;
  std::size_t violations = 0;
  auto tally = [&](const StochasticGradientOracle& oracle, OptimizerKind kind,
                   const OptimizerConfig& cfg, const Matrix& init, std::uint64_t n) {
    const StepRoute route = kind == OptimizerKind::muon   ? StepRoute::muon
                            : kind == OptimizerKind::mona ? StepRoute::mona
                                                          : StepRoute::mona_lite;
    LemmaMonitor mon(lemma_settings_for(route, cfg));
    run_on_landscape(oracle, kind, cfg, init, n, [&](const LandscapeStep& s) {
      violations += mon.observe(norm_sample(s.step, s.trace)).size();
      ++steps;
    });
  };
  const std::uint64_t n = quick ? 500 : 2000;
  const std::uint64_t landscape_seeds = quick ? 2 : 8;
  const ConvergenceFixture conv;
  const QuadraticLandscape quad = conv.landscape();
  const DoubleWellLandscape well = DoubleWellLandscape::standard();
  for (OptimizerKind kind : {OptimizerKind::muon, OptimizerKind::mona, OptimizerKind::mona_lite}) {
    for (std::uint64_t seed = 0; seed < landscape_seeds; ++seed) {
      OptimizerConfig cfg = landscape_config(kind, 0.01, alpha_sign);
      tally(StochasticGradientOracle(quad, 0.1, 1e3, seed), kind, cfg, Matrix(1, 2, conv.init), n);
      cfg.learning_rate = 0.3;
      tally(StochasticGradientOracle(well, 1.5, 20.0, seed), kind, cfg, well.sharp().center, n);
    }
  }
  ExperimentConfig toy = quick ? toynet_comparison_config({0}, 500) : toynet_comparison_config({0, 1, 2}, 2000);
  for (auto& o : toy.optimizers) {
    if (o.kind != OptimizerKind::muon && o.kind != OptimizerKind::adamw) {
      o.config.accel_alpha = alpha_sign * default_alpha(o.config.accel_beta);
    }
    for (std::uint64_t seed : toy.seeds) {
      const TrainResult r = run_cell(toy, o, seed);
      violations += r.lemma_violations;
      steps += r.records.size();
    }
  }
  return make("lemma_bounds", violations == 0,
              "bounds on ||A||, ||G~||, ||M|| at every step of the fixture runs",
              {{"steps", static_cast<double>(steps)}, {"violations", static_cast<double>(violations)}});
}

void add_convergence(VerificationReport& rep, double alpha_sign, bool quick) {
  ConvergenceFixture fx;
  if (quick) {
    fx.steps = 4000;
    fx.rate_short = 1000;
    fx.rate_long = 4000;
  }
  const QuadraticLandscape land = fx.landscape();
  const OptimizerConfig cfg = landscape_config(OptimizerKind::mona, fx.learning_rate, alpha_sign);
  const ConvergenceReport r = check_convergence_bound(land, OptimizerKind::mona, cfg, fx.setup(0));
  CheckResult c;
  c.name = "convergence_bound";
  c.status = r.status;
  c.detail = r.reason.empty() ? "mean ||grad f||^2 <= bound with measured rho" : r.reason;
  c.numbers = {{"lhs", r.lhs}, {"rhs", r.rhs}, {"rho_hat", r.alignment.rho_hat},
               {"eta", r.eta}, {"eta_limit", r.eta_limit}, {"C_m", r.estimate.capped_ortho_sq}};
  rep.add(std::move(c));

  const RateProbe p = rate_probe(land, OptimizerKind::mona, cfg, fx.setup(0), fx.rate_eta_scale,
                                 fx.rate_short, fx.rate_long);
  rep.add(make("convergence_rate_probe", p.pass, "eta = c / sqrt(K): long-run average <= short-run / 1.3",
               {{"short_avg", p.short_avg}, {"long_avg", p.long_avg}, {"ratio", p.ratio}}));
}

CheckResult check_accel_direction(double alpha_sign, std::size_t seeds) {
  const AccelDirectionFixture fx;
  const QuadraticLandscape land = fx.landscape();
  const OptimizerConfig cfg = landscape_config(OptimizerKind::mona, fx.learning_rate, alpha_sign);
  double lo = 1e300, hi = 0.0;
  for (std::uint64_t seed = 0; seed < seeds; ++seed) {
    const StochasticGradientOracle oracle(land, fx.noise_sigma, 1e3, seed);
    const EigenAccelStat s = escape_direction_stat(oracle, land, OptimizerKind::mona, cfg,
                                                   Matrix(1, 2, fx.init), fx.steps);
    lo = std::min(lo, s.sharp_to_flat);
    hi = std::max(hi, s.sharp_to_flat);
  }
  return make("accel_sharp_direction", lo >= 25.0 && hi <= 400.0,
              "time-averaged |A| sharp/flat ratio on diag(100, 1) within [25, 400]",
              {{"min_ratio", lo}, {"max_ratio", hi}});
}

CheckResult check_escape(double alpha_sign, std::size_t nseeds) {
  const EscapeFixture fx;
  const DoubleWellLandscape land = DoubleWellLandscape::standard();
  std::vector<std::uint64_t> seeds(nseeds);
  std::iota(seeds.begin(), seeds.end(), std::uint64_t{0});
  const OptimizerConfig muon = landscape_config(OptimizerKind::muon, fx.learning_rate);
  const OptimizerConfig mona = landscape_config(OptimizerKind::mona, fx.learning_rate, alpha_sign);
  auto rate = [&](OptimizerKind k, const OptimizerConfig& c, EscapeStart start) {
    return escape_experiment(k, c, land, fx.noise_sigma, fx.clip_bound, seeds, fx.steps, start).rate;
  };
  const double r_muon = rate(OptimizerKind::muon, muon, EscapeStart::sharp);
  const double r_mona = rate(OptimizerKind::mona, mona, EscapeStart::sharp);
  const double f_muon = rate(OptimizerKind::muon, muon, EscapeStart::flat);
  const double f_mona = rate(OptimizerKind::mona, mona, EscapeStart::flat);
  const bool ok = r_mona >= r_muon && f_muon <= 0.1 && f_mona <= 0.1;
  return make("sharp_minimum_escape", ok,
              "escape rate MONA >= Muon from the sharp well; flat-well escape <= 0.1 for both",
              {{"mona", r_mona}, {"muon", r_muon}, {"margin", r_mona - r_muon},
               {"flat_mona", f_mona}, {"flat_muon", f_muon}});
}

}  // namespace

VerificationReport check_suite(const CheckOptions& options) {
  const NsConfig ns = scaled_ns(options.ns_coeff_scale);
  const bool quick = options.quick;
  VerificationReport rep;
  rep.add(check_ns_scalar(ns));
  rep.add(check_ns_band(ns, quick ? 100 : 500));
  rep.add(check_reduction(quick ? 20 : 100));
  rep.add(check_streaming());
  rep.add(check_bf16_accuracy(quick ? 5 : 20));
  rep.add(check_gradients(quick ? 20 : 100));
  rep.add(check_lemma_fixtures(options.alpha_sign, quick));
  add_convergence(rep, options.alpha_sign, quick);
  rep.add(check_accel_direction(options.alpha_sign, quick ? 3 : 10));
  rep.add(check_escape(options.alpha_sign, 50));
  return rep;
}

}  // namespace mona
