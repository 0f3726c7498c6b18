// SPDX-License-Identifier: Apache-2.0
#include "mona/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace mona {

NormSample norm_sample(std::uint64_t step, const StepTrace& trace) {
  return NormSample{step, trace.grad_norm, trace.accel_norm, trace.accel_grad_norm,
                    trace.momentum_norm};
}

LemmaSettings lemma_settings_for(StepRoute route, const OptimizerConfig& cfg) {
  LemmaSettings s;
  s.momentum = cfg.momentum;
  switch (route) {
    case StepRoute::mona:
    case StepRoute::mona_lite:
      s.alpha = cfg.accel_alpha;
      break;
    case StepRoute::muon:
      s.alpha = 0.0;
      s.check_accel = false;
      break;
    case StepRoute::adamw_acc:
      s.alpha = cfg.accel_alpha;
      s.check_momentum = false;
      break;
    case StepRoute::adamw:
      s.check_accel = false;
      s.check_momentum = false;
      break;
  }
  if (route == StepRoute::mona_lite && cfg.precision == Precision::bf16_streaming) {
    // A and the previous gradient are re-read after bf16 rounding.
    s.slack = 1.0 / 64.0;
  }
  return s;
}

std::vector<LemmaViolation> LemmaMonitor::observe(const NormSample& s) {
  std::vector<LemmaViolation> found;
  grad_max_ = std::max(grad_max_, s.grad_norm);
  ++steps_;
  auto check = [&](const char* name, double value, double limit) {
    if (!(value <= limit + settings_.slack * std::max(1.0, limit))) {
      found.push_back(LemmaViolation{s.step, name, value, limit});
    }
  };
  const double amp = 1.0 + 2.0 * std::abs(settings_.alpha);
  if (settings_.check_accel) {
    check("accel", s.accel_norm, 2.0 * grad_max_);
    check("accel_grad", s.accel_grad_norm, grad_max_ * amp);
  }
  if (settings_.check_momentum) {
    check("momentum", s.momentum_norm, grad_max_ * amp / (1.0 - settings_.momentum));
  }
  violations_ += found.size();
  return found;
}

LemmaReport check_lemma_bounds(std::span<const NormSample> samples,
                               const LemmaSettings& settings) {
  LemmaMonitor monitor(settings);
  LemmaReport report;
  for (const NormSample& s : samples) {
    auto v = monitor.observe(s);
    report.violations.insert(report.violations.end(), v.begin(), v.end());
  }
  report.steps_checked = samples.size();
  return report;
}

void AlignmentProbe::observe(std::uint64_t step, const Matrix& true_grad, const Matrix& direction) {
  if (step <= burn_in_) return;
  const double gsq = squared_norm(true_grad);
  if (std::sqrt(gsq) < 1e-10) {
    ++excluded_;
    return;
  }
  const double ratio = inner(true_grad, direction) / gsq;
  min_ratio_ = used_ == 0 ? ratio : std::min(min_ratio_, ratio);
  sum_ratio_ += ratio;
  positive_ += ratio > 0.0 ? 1 : 0;
  ++used_;
}

AlignmentReport AlignmentProbe::report() const {
  AlignmentReport r;
  r.steps_used = used_;
  r.steps_excluded = excluded_;
  if (used_ > 0) {
    r.rho_hat = min_ratio_;
    r.mean_ratio = sum_ratio_ / static_cast<double>(used_);
    r.positive_fraction = static_cast<double>(positive_) / static_cast<double>(used_);
  }
  return r;
}

AlignmentReport estimate_alignment(const StochasticGradientOracle& oracle, OptimizerKind kind,
                                   const OptimizerConfig& cfg, const Matrix& init,
                                   std::uint64_t steps, std::uint64_t burn_in) {
  AlignmentProbe probe(burn_in);
  run_on_landscape(oracle, kind, cfg, init, steps, [&](const LandscapeStep& s) {
    probe.observe(s.step, *s.true_grad, *s.direction);
  });
  return probe.report();
}

BoundEstimate make_bound_estimate(double smoothness, double rho, double grad_max,
                                  double max_ortho_sq, std::size_t rows, std::size_t cols,
                                  double gamma, double momentum, double alpha) {
  BoundEstimate e;
  e.smoothness = smoothness;
  e.rho = rho;
  e.grad_max = grad_max;
  e.rank = std::min(rows, cols);
  e.capped_ortho_sq = std::max(max_ortho_sq, static_cast<double>(e.rank));
  e.gamma = gamma;
  e.g_bar = grad_max * (1.0 + 2.0 * std::abs(alpha));
  e.c1 = e.g_bar / (1.0 - momentum);
  e.c4 = gamma * gamma * e.capped_ortho_sq / 2.0;
  e.c2 = smoothness * e.c4;
  e.c3 = rho * gamma;
  return e;
}

double convergence_bound_rhs(const BoundEstimate& est, double eta, double initial_gap,
                             std::uint64_t steps) {
  const double k = static_cast<double>(steps);
  return initial_gap / (eta * est.c3 * k) + eta * est.smoothness * est.c4 / est.c3;
}

std::string_view to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::pass: return "pass";
    case CheckStatus::fail: return "fail";
    case CheckStatus::skipped: return "skipped";
  }
  return "?";
}

namespace {

struct WindowStats {
  AlignmentReport alignment;
  double mean_sq_grad = 0.0;
  double initial_gap = 0.0;
  double grad_max = 0.0;
  double max_ortho_sq = 0.0;
  std::uint64_t window = 0;
};

WindowStats measure_window(const QuadraticLandscape& landscape, OptimizerKind kind,
                           const OptimizerConfig& cfg, const ConvergenceSetup& setup) {
  if (setup.steps <= setup.burn_in) {
    throw std::invalid_argument("convergence check: steps must exceed burn_in");
  }
  const StochasticGradientOracle oracle(landscape, setup.noise_sigma, setup.clip_bound, setup.seed);
  const Matrix init = setup.init.empty() ? Matrix(landscape.rows(), landscape.cols()) : setup.init;
  AlignmentProbe probe(setup.burn_in);
  WindowStats w;
  double sum_sq = 0.0;
  run_on_landscape(oracle, kind, cfg, init, setup.steps, [&](const LandscapeStep& s) {
    w.grad_max = std::max(w.grad_max, frobenius_norm(*s.noisy_grad));
    w.max_ortho_sq = std::max(w.max_ortho_sq, squared_norm(*s.direction));
    if (s.step <= setup.burn_in) return;
    if (s.step == setup.burn_in + 1) w.initial_gap = s.loss;
    probe.observe(s.step, *s.true_grad, *s.direction);
    sum_sq += squared_norm(*s.true_grad);
    ++w.window;
  });
  w.alignment = probe.report();
  w.mean_sq_grad = sum_sq / static_cast<double>(w.window);
  return w;
}

}  // namespace

ConvergenceReport check_convergence_bound(const QuadraticLandscape& landscape,
                                          OptimizerKind kind, const OptimizerConfig& cfg,
                                          const ConvergenceSetup& setup) {
  const WindowStats w = measure_window(landscape, kind, cfg, setup);
  ConvergenceReport r;
  r.alignment = w.alignment;
  r.eta = cfg.learning_rate;
  r.steps = w.window;
  r.lhs = w.mean_sq_grad;
  r.initial_gap = w.initial_gap;
  const double gamma = cfg.gamma.scale(landscape.rows(), landscape.cols());
  const double alpha = kind == OptimizerKind::muon ? 0.0 : cfg.accel_alpha;
  r.estimate = make_bound_estimate(landscape.lambda_max(), w.alignment.rho_hat, w.grad_max,
                                   w.max_ortho_sq, landscape.rows(), landscape.cols(), gamma,
                                   cfg.momentum, alpha);
  if (!(w.alignment.rho_hat > 0.0)) {
    r.status = CheckStatus::skipped;
    r.reason = "measured alignment rho_hat <= 0; bound not applicable";
    return r;
  }
  r.eta_limit = std::min(1.0 / r.estimate.smoothness, r.estimate.c3 / r.estimate.c2);
  r.step_condition = r.eta <= r.eta_limit;
  r.rhs = convergence_bound_rhs(r.estimate, r.eta, r.initial_gap, r.steps);
  if (!r.step_condition) {
    r.status = CheckStatus::skipped;
    r.reason = "step size exceeds min(1/L, C3/C2)";
    return r;
  }
  r.status = r.lhs <= r.rhs ? CheckStatus::pass : CheckStatus::fail;
  if (r.status == CheckStatus::fail) r.reason = "mean squared gradient norm exceeds the bound";
  return r;
}

RateProbe rate_probe(const QuadraticLandscape& landscape, OptimizerKind kind,
                     OptimizerConfig cfg, const ConvergenceSetup& setup, double eta_scale,
                     std::uint64_t short_steps, std::uint64_t long_steps) {
  RateProbe p;
  p.short_steps = short_steps;
  p.long_steps = long_steps;
  auto run = [&](std::uint64_t k) {
    ConvergenceSetup s = setup;
    s.steps = k;
    cfg.learning_rate = eta_scale / std::sqrt(static_cast<double>(k));
    return measure_window(landscape, kind, cfg, s).mean_sq_grad;
  };
  p.short_avg = run(short_steps);
  p.long_avg = run(long_steps);
  p.ratio = p.long_avg / p.short_avg;
  p.pass = p.ratio <= 1.0 / 1.3;
  return p;
}

void EigenAccelProbe::observe(const Matrix& accel) {
  const std::vector<double> c = land_->to_eigenbasis(accel);
  if (sum_abs_.empty()) sum_abs_.assign(c.size(), 0.0);
  for (std::size_t i = 0; i < c.size(); ++i) sum_abs_[i] += std::abs(c[i]);
  ++steps_;
}

EigenAccelStat EigenAccelProbe::stat() const {
  EigenAccelStat s;
  s.steps = steps_;
  if (steps_ == 0) return s;
  s.mean_abs.resize(sum_abs_.size());
  for (std::size_t i = 0; i < sum_abs_.size(); ++i) {
    s.mean_abs[i] = sum_abs_[i] / static_cast<double>(steps_);
  }
  const auto& eigs = land_->eigs();
  const auto sharp = static_cast<std::size_t>(std::max_element(eigs.begin(), eigs.end()) - eigs.begin());
  const auto flat = static_cast<std::size_t>(std::min_element(eigs.begin(), eigs.end()) - eigs.begin());
  s.sharp_to_flat = s.mean_abs[sharp] / s.mean_abs[flat];
  return s;
}

EigenAccelStat escape_direction_stat(const StochasticGradientOracle& oracle,
                                     const QuadraticLandscape& landscape, OptimizerKind kind,
                                     const OptimizerConfig& cfg, const Matrix& init,
                                     std::uint64_t steps) {
  EigenAccelProbe probe(landscape);
  run_on_landscape(oracle, kind, cfg, init, steps,
                   [&](const LandscapeStep& s) { probe.observe(*s.accel); });
  return probe.stat();
}

bool VerificationReport::ok() const {
  return std::none_of(checks.begin(), checks.end(),
                      [](const CheckResult& c) { return c.status == CheckStatus::fail; });
}

std::vector<std::string> VerificationReport::failures() const {
  std::vector<std::string> out;
  for (const auto& c : checks) {
    if (c.status == CheckStatus::fail) out.push_back(c.name);
  }
  return out;
}

std::string VerificationReport::to_json() const {
  nlohmann::ordered_json root;
  root["ok"] = ok();
  root["checks"] = nlohmann::ordered_json::array();
  for (const auto& c : checks) {
    nlohmann::ordered_json j;
    j["name"] = c.name;
    j["status"] = std::string(to_string(c.status));
    j["detail"] = c.detail;
    nlohmann::ordered_json nums = nlohmann::ordered_json::object();
    for (const auto& [k, v] : c.numbers) {
      if (std::isfinite(v)) {
        nums[k] = v;
      } else {
        nums[k] = nullptr;
      }
    }
    j["numbers"] = std::move(nums);
    root["checks"].push_back(std::move(j));
  }
  return root.dump(2) + "\n";
}

std::string VerificationReport::to_text() const {
  std::ostringstream os;
  for (const auto& c : checks) {
    std::string tag(to_string(c.status));
    std::transform(tag.begin(), tag.end(), tag.begin(), [](unsigned char ch) {
      return static_cast<char>(std::toupper(ch));
    });
    os << "[" << tag << "] " << c.name;
    if (!c.detail.empty()) os << ": " << c.detail;
    os << "\n";
    for (const auto& [k, v] : c.numbers) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.6g", v);
      os << "    " << k << " = " << buf << "\n";
    }
  }
  os << (ok() ? "all checks passed or skipped" : "some checks failed") << "\n";
  return os.str();
}

}  // namespace mona
