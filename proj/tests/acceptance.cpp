// SPDX-License-Identifier: Apache-2.0
// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Each criterion runs its own fixtures at full size.
//
// MONA_ACCEPT_BENCH_STEPS overrides the number of timed benchmark rounds.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "mona/fixtures.hpp"
#include "mona/svd.hpp"
#include "oracles.hpp"

using namespace mona;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Toynet comparison runs are shared by the ordering and lemma criteria.
struct ToynetRuns {
  std::vector<std::string> names;
  std::vector<double> mean_loss;
  std::size_t steps = 0;
  std::size_t violations = 0;
  std::size_t diverged = 0;
};

const ToynetRuns& toynet_runs() {
  static const ToynetRuns runs = [] {
    std::vector<std::uint64_t> seeds(10);
    std::iota(seeds.begin(), seeds.end(), std::uint64_t{0});
    const ExperimentConfig cfg = toynet_comparison_config(seeds, 5000);
    ToynetRuns r;
    for (const auto& opt : cfg.optimizers) {
      double sum = 0.0;
      std::size_t completed = 0;
      for (std::uint64_t seed : seeds) {
        const TrainResult t = run_cell(cfg, opt, seed);
        r.steps += t.records.size() * t.params.size();
        r.violations += t.lemma_violations;
        if (t.status == RunStatus::completed) {
          sum += t.final_eval_loss;
          ++completed;
        } else {
          ++r.diverged;
        }
      }
      r.names.push_back(opt.name);
      r.mean_loss.push_back(completed ? sum / static_cast<double>(completed) : INFINITY);
    }
    return r;
  }();
  return runs;
}

Outcome reduction_identity() {
  std::mt19937_64 rng(101);
  std::size_t mismatches = 0;
  for (int f = 0; f < 100; ++f) {
    std::uniform_int_distribution<std::size_t> dim(1, 12);
    const std::size_t r = dim(rng), c = dim(rng);
    OptimizerConfig cfg;
    cfg.accel_alpha = 0.0;
    cfg.learning_rate = 0.01 + 0.05 * std::uniform_real_distribution<double>()(rng);
    const Matrix w = random_normal(r, c, rng);
    ParamGroup mona("w", w, ParamKind::matrix);
    ParamGroup muon("w", w, ParamKind::matrix);
    // Random starting state; MONA's own acceleration history is irrelevant
    // at alpha = 0 and is randomized too.
    const Matrix m0 = random_normal(r, c, rng);
    mona.state.momentum = m0;
    muon.state.momentum = m0;
    mona.state.accel = random_normal(r, c, rng);
    mona.state.prev_grad = random_normal(r, c, rng);
    for (int k = 0; k < 20; ++k) {
      const Matrix g = random_normal(r, c, rng);
      mona_step(mona, g, cfg);
      muon_step(muon, g, cfg);
    }
    mismatches += (mona.weights == muon.weights && mona.state.momentum == muon.state.momentum) ? 0 : 1;
  }
  return {mismatches == 0, fmt("100 fixtures x 20 steps, %zu bitwise mismatches", mismatches)};
}

Outcome lemma_bounds() {
  std::size_t steps = 0, violations = 0;
  const ConvergenceFixture conv;
  const QuadraticLandscape quad = conv.landscape();
  const DoubleWellLandscape well = DoubleWellLandscape::standard();
  for (OptimizerKind kind : {OptimizerKind::muon, OptimizerKind::mona, OptimizerKind::mona_lite}) {
    const StepRoute route = kind == OptimizerKind::muon   ? StepRoute::muon
                            : kind == OptimizerKind::mona ? StepRoute::mona
                                                          : StepRoute::mona_lite;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto run = [&](const StochasticGradientOracle& o, const OptimizerConfig& cfg, const Matrix& init) {
        LemmaMonitor mon(lemma_settings_for(route, cfg));
        run_on_landscape(o, kind, cfg, init, 2000, [&](const LandscapeStep& s) {
          violations += mon.observe(norm_sample(s.step, s.trace)).size();
          ++steps;
        });
      };
      run(StochasticGradientOracle(quad, conv.noise_sigma, 1e3, seed), landscape_config(kind, 0.01),
          Matrix(1, 2, conv.init));
      run(StochasticGradientOracle(well, 1.5, 20.0, seed), landscape_config(kind, 0.3), well.sharp().center);
    }
  }
  const ToynetRuns& t = toynet_runs();
  steps += t.steps;
  violations += t.violations;
  return {violations == 0 && steps >= 100000,
          fmt("%zu parameter-steps (landscapes + 40 toynet runs), %zu violations", steps, violations)};
}

Outcome ns_band_subspace() {
  std::mt19937_64 rng(303);
  double lo = 1e9, hi = 0.0, angle = 0.0;
  for (int t = 0; t < 500; ++t) {
    const NsReport r = ns_diagnostics(random_ns_fixture(rng, 32));
    lo = std::min(lo, r.sv_min);
    hi = std::max(hi, r.sv_max);
    angle = std::max(angle, r.max_principal_angle);
  }
  const double diag = newton_schulz(Matrix::from_rows({{0.5, 0.0}, {0.0, 0.5}})).output(0, 0);
  const double scalar = oracle::ns_scalar(1.0 / std::sqrt(2.0));
  const bool ok = lo >= 0.5 && hi <= 1.4 && angle <= 1e-6 && std::fabs(diag - 1.1085) <= 1e-3 &&
                  std::fabs(diag - scalar) <= 1e-14;
  return {ok, fmt("500 matrices: sv in [%.4f, %.4f], max angle %.2e rad; diag(0.5,0.5) -> %.6f "
                  "(scalar recurrence %.6f, target 1.1085 +- 1e-3)",
                  lo, hi, angle, diag, scalar)};
}

Outcome convergence_bound() {
  const ConvergenceFixture fx;
  const OptimizerConfig cfg = landscape_config(OptimizerKind::mona, fx.learning_rate);
  const ConvergenceReport r = check_convergence_bound(fx.landscape(), OptimizerKind::mona, cfg, fx.setup(0));
  const RateProbe p = rate_probe(fx.landscape(), OptimizerKind::mona, cfg, fx.setup(0), fx.rate_eta_scale,
                                 fx.rate_short, fx.rate_long);
  const bool ok = r.status == CheckStatus::pass && r.step_condition && p.pass;
  return {ok, fmt("K=%llu eta=%.3g (limit %.4g): lhs %.4g <= rhs %.4g, rho_hat %.4g; rate probe "
                  "K=%llu->%llu ratio %.3f (need <= %.3f)",
                  static_cast<unsigned long long>(r.steps), r.eta, r.eta_limit, r.lhs, r.rhs,
                  r.alignment.rho_hat, static_cast<unsigned long long>(p.short_steps),
                  static_cast<unsigned long long>(p.long_steps), p.ratio, 1.0 / 1.3)};
}

Outcome accel_direction() {
  const AccelDirectionFixture fx;
  const QuadraticLandscape q = fx.landscape();
  double lo = 1e300, hi = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const EigenAccelStat s = escape_direction_stat(
        StochasticGradientOracle(q, fx.noise_sigma, 1e3, seed), q, OptimizerKind::mona,
        landscape_config(OptimizerKind::mona, fx.learning_rate), Matrix(1, 2, fx.init), fx.steps);
    lo = std::min(lo, s.sharp_to_flat);
    hi = std::max(hi, s.sharp_to_flat);
  }
  return {lo >= 25.0 && hi <= 400.0,
          fmt("10 seeds x %llu steps: sharp/flat |A| ratio in [%.1f, %.1f] (bracket [25, 400])",
              static_cast<unsigned long long>(fx.steps), lo, hi)};
}

Outcome escape() {
  const EscapeFixture fx;
  const DoubleWellLandscape d = DoubleWellLandscape::standard();
  std::vector<std::uint64_t> seeds(50);
  std::iota(seeds.begin(), seeds.end(), std::uint64_t{0});
  auto rate = [&](OptimizerKind k, EscapeStart s) {
    return escape_experiment(k, landscape_config(k, fx.learning_rate), d, fx.noise_sigma, fx.clip_bound,
                             seeds, fx.steps, s)
        .rate;
  };
  const double mona = rate(OptimizerKind::mona, EscapeStart::sharp);
  const double muon = rate(OptimizerKind::muon, EscapeStart::sharp);
  const double fmona = rate(OptimizerKind::mona, EscapeStart::flat);
  const double fmuon = rate(OptimizerKind::muon, EscapeStart::flat);
  return {mona >= muon && fmona <= 0.1 && fmuon <= 0.1 && d.curvature_ratio() >= 10.0,
          fmt("curvature ratio %.2f, 50 seeds: MONA %.2f vs Muon %.2f (margin %+.2f); flat-well "
              "escape MONA %.2f Muon %.2f",
              d.curvature_ratio(), mona, muon, mona - muon, fmona, fmuon)};
}

Outcome ordering() {
  const ToynetRuns& t = toynet_runs();
  auto loss = [&](const std::string& n) {
    for (std::size_t i = 0; i < t.names.size(); ++i) {
      if (t.names[i] == n) return t.mean_loss[i];
    }
    return static_cast<double>(INFINITY);
  };
  const double adamw = loss("adamw"), acc = loss("adamw_acc"), muon = loss("muon"), mona = loss("mona");
  const bool gating = mona <= muon && acc <= adamw;
  return {gating && t.diverged == 0,
          fmt("10 seeds: MONA %.5f, Muon %.5f, AdamW-Acc %.5f, AdamW %.5f; MONA<=Muon %s, "
              "AdamW-Acc<=AdamW %s, Muon<=AdamW-Acc %s (not gating)",
              mona, muon, acc, adamw, mona <= muon ? "yes" : "no", acc <= adamw ? "yes" : "no",
              muon <= acc ? "yes" : "no")};
}

Outcome mona_lite() {
  std::mt19937_64 rng(808);
  bool exact = true;
  for (int f = 0; f < 10; ++f) {
    OptimizerConfig buffered;
    OptimizerConfig streaming = buffered;
    streaming.precision = Precision::fp32_streaming;
    const Matrix w = random_normal(7, 5, rng);
    ParamGroup a("w", w, ParamKind::matrix);
    ParamGroup b("w", w, ParamKind::matrix);
    for (int k = 0; k < 50; ++k) {
      const Matrix g = random_normal(7, 5, rng);
      mona_step(a, g, buffered);
      mona_lite_step(b, g, streaming);
    }
    exact = exact && a.weights == b.weights;
  }
  const Bf16AccuracyResult acc = bf16_accuracy_experiment(20);
  const std::size_t n = 1024 * 1024;
  const double reduction = 1.0 - static_cast<double>(auxiliary_state_bytes(Precision::bf16_streaming, n)) /
                                     static_cast<double>(auxiliary_state_bytes(Precision::fp32_buffered, n));
  return {exact && acc.relative_gap <= 0.05 && reduction == 0.75,
          fmt("fp32 streaming bit-exact: %s; bf16 final error %.5f vs fp32 %.5f (gap %.2f%%, limit 5%%); "
              "auxiliary memory reduction %.0f%%",
              exact ? "yes" : "no", acc.bf16_error, acc.fp32_error, 100.0 * acc.relative_gap,
              100.0 * reduction)};
}

Outcome timing() {
  BenchConfig b;
  b.steps = 12;
  b.warmup = 2;
  if (const char* s = std::getenv("MONA_ACCEPT_BENCH_STEPS")) b.steps = std::strtoull(s, nullptr, 10);
  const BenchReport r = bench_overhead(b);
  return {r.inner_ok && r.iter_ok,
          fmt("1024x1024, %llu rounds: inner overhead %+.2f%% (limit 5%%), iteration %+.2f%% (limit "
              "%.2f%% = 2x control band; control %+.2f%%)",
              static_cast<unsigned long long>(r.steps), 100.0 * r.mona_inner, 100.0 * r.mona_iter,
              200.0 * r.noise_band, 100.0 * r.control_iter)};
}

Outcome gradients() {
  std::mt19937_64 rng(1010);
  auto check = [](const Matrix& w, const Matrix& g, const std::function<double(const Matrix&)>& f) {
    return max_abs_diff(g, oracle::central_difference(w, f));
  };
  double quad_err = 0.0, well_err = 0.0, net_err = 0.0;
  std::vector<double> eigs(12);
  for (double& e : eigs) e = std::uniform_real_distribution<double>(0.5, 10.0)(rng);
  const QuadraticLandscape q = QuadraticLandscape::rotated(random_normal(3, 4, rng), eigs, rng);
  const DoubleWellLandscape d = DoubleWellLandscape::standard();
  for (int t = 0; t < 100; ++t) {
    const Matrix wq = random_normal(3, 4, rng) * 2.0;
    quad_err = std::max(quad_err, check(wq, q.eval(wq).grad, [&](const Matrix& p) { return q.eval(p).loss; }));
    const Matrix wd = random_uniform(1, 2, -1.5, 4.5, rng);
    well_err = std::max(well_err, check(wd, d.eval(wd).grad, [&](const Matrix& p) { return d.eval(p).loss; }));
    Mlp net(MlpSpec{{4, 16, 16, 4}, Activation::tanh, static_cast<std::uint64_t>(t), 0.5});
    const Matrix x = random_normal(8, 4, rng);
    const Matrix y = random_normal(8, 4, rng);
    std::vector<Matrix> grads;
    net.forward_backward(x, y, grads);
    for (std::size_t p = 0; p < grads.size(); ++p) {
      const Matrix w = net.params()[p].weights;
      net_err = std::max(net_err, check(w, grads[p], [&](const Matrix& trial) {
                           net.params()[p].weights = trial;
                           const double l = net.loss(x, y);
                           net.params()[p].weights = w;
                           return l;
                         }));
    }
  }
  const double worst = std::max({quad_err, well_err, net_err});
  return {worst <= 1e-5, fmt("100 points each: max |analytic - central diff| quadratic %.2e, double well "
                             "%.2e, toynet %.2e (limit 1e-5)",
                             quad_err, well_err, net_err)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "mona_acceptance_determinism";
  fs::remove_all(root);
  auto config = [&](const std::string& task, const std::string& opts, const fs::path& out) {
    return "{\"name\": \"det\", \"task\": " + task + ", \"steps\": 300, \"seeds\": [0, 7, 11], "
           "\"eval_every\": 50, \"output_dir\": \"" + out.string() + "\", \"optimizers\": " + opts + "}";
  };
  const std::string toy = R"({"type": "teacher_student"})";
  const std::string toy_opts = R"([{"type": "adamw"}, {"type": "adamw_acc"}, {"type": "muon"},
      {"type": "mona"}, {"type": "mona_lite"}])";
  const std::string well = R"({"type": "double_well"})";
  const std::string well_opts = R"([{"type": "muon", "learning_rate": 0.3},
      {"type": "mona", "learning_rate": 0.3}, {"type": "mona_lite", "learning_rate": 0.3}])";
  std::size_t files = 0, differing = 0;
  for (const auto& [task, opts] : {std::pair{toy, toy_opts}, std::pair{well, well_opts}}) {
    const fs::path a = root / "a", b = root / "b";
    fs::remove_all(a);
    fs::remove_all(b);
    const std::string ta = config(task, opts, a), tb = config(task, opts, b);
    run_experiment(parse_experiment_config(ta), ta);
    run_experiment(parse_experiment_config(tb), tb);
    for (const auto& e : fs::directory_iterator(a)) {
      if (e.path().extension() != ".csv") continue;
      ++files;
      differing += slurp(e.path()) == slurp(b / e.path().filename()) ? 0 : 1;
    }
  }
  fs::remove_all(root);
  return {files > 0 && differing == 0,
          fmt("%zu CSVs from two invocations each, %zu differ byte-wise", files, differing)};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    Outcome (*run)();
  };
  const Criterion criteria[] = {
      {"reduction_identity", reduction_identity},
      {"lemma_bounds", lemma_bounds},
      {"newton_schulz_band_subspace", ns_band_subspace},
      {"convergence_bound", convergence_bound},
      {"accel_sharp_direction", accel_direction},
      {"sharp_minimum_escape", escape},
      {"optimizer_ordering", ordering},
      {"mona_lite", mona_lite},
      {"timing_overhead", timing},
      {"gradient_correctness", gradients},
      {"determinism", determinism},
  };
  int failed = 0;
  int index = 0;
  for (const auto& c : criteria) {
    ++index;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s %2d %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", index, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  std::printf("%d of %d criteria passed\n", index - failed, index);
  return failed == 0 ? 0 : 1;
}
