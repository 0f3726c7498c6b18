// SPDX-License-Identifier: Apache-2.0
#include "mona/optimizers.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>

namespace mona {

namespace {

using Clock = std::chrono::steady_clock;

std::int64_t elapsed_ns(Clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - start).count();
}

void ensure_allocated(Matrix& buffer, const Matrix& like) {
  if (buffer.empty()) buffer = Matrix(like.rows(), like.cols());
}

void ensure_allocated(std::vector<Bf16>& buffer, std::size_t n) {
  // Bf16{0} decodes to +0.0.
  if (buffer.empty()) buffer.assign(n, Bf16{});
}

void check_gradient(const ParamGroup& group, const Matrix& grad) {
  if (!grad.same_shape(group.weights)) {
    throw DimensionError("gradient for '" + group.name + "' has shape " + grad.shape_string() +
                         ", weights are " + group.weights.shape_string());
  }
  if (!all_finite(grad)) throw StepRejected(group.name, "non-finite gradient");
}

void require_matrix(const ParamGroup& group, const char* op) {
  if (group.kind != ParamKind::matrix) {
    throw std::invalid_argument(std::string(op) + ": '" + group.name +
                                "' is a vector parameter; route it through AdamW");
  }
}

// Shared tail of Muon/MONA: orthogonalize M and apply
// W <- W - lr (gamma O + lambda W) in one expression per entry.
void orthogonal_update(ParamGroup& group, const OptimizerConfig& cfg, StepTrace& trace,
                       Matrix* direction) {
  NsResult ns = newton_schulz(group.state.momentum, cfg.ns);
  trace.ns_degenerate = ns.degenerate;
  trace.ortho_norm = frobenius_norm(ns.output);

  const double lr = cfg.learning_rate;
  const double gamma = cfg.gamma.scale(group.weights.rows(), group.weights.cols());
  const double decay = cfg.weight_decay;
  Matrix& w = group.weights;
  const Matrix& o = ns.output;
  double update_sq = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double before = w[i];
    w[i] = before - lr * (gamma * o[i] + decay * before);
    const double delta = w[i] - before;
    update_sq += delta * delta;
  }
  trace.update_norm = std::sqrt(update_sq);
  if (direction != nullptr) *direction = std::move(ns.output);
}

// Buffered D, A, G~ stages shared by MONA and AdamW-Acc. Returns G~.
Matrix accelerate_buffered(ParamState& state, const Matrix& grad, double beta, double alpha,
                           StepTrace& trace) {
  ensure_allocated(state.accel, grad);
  ensure_allocated(state.prev_grad, grad);

  Matrix diff(grad.rows(), grad.cols());
  for (std::size_t i = 0; i < grad.size(); ++i) diff[i] = grad[i] - state.prev_grad[i];

  const double keep = 1.0 - beta;
  Matrix& a = state.accel;
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = beta * a[i] + keep * diff[i];

  Matrix accelerated(grad.rows(), grad.cols());
  for (std::size_t i = 0; i < grad.size(); ++i) accelerated[i] = grad[i] + alpha * a[i];

  state.prev_grad = grad;

  trace.diff_norm = frobenius_norm(diff);
  trace.accel_norm = frobenius_norm(a);
  trace.accel_grad_norm = frobenius_norm(accelerated);
  return accelerated;
}

void adam_update(ParamGroup& group, const Matrix& g, const AdamConfig& acfg, double lr,
                 StepTrace& trace, Matrix* direction) {
  ParamState& s = group.state;
  ensure_allocated(s.adam_m, g);
  ensure_allocated(s.adam_v, g);
  s.step += 1;

  const double shrink = 1.0 - lr * acfg.weight_decay;
  const double keep1 = 1.0 - acfg.beta1;
  const double keep2 = 1.0 - acfg.beta2;
  const double bc1 = 1.0 - std::pow(acfg.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(acfg.beta2, static_cast<double>(s.step));

  Matrix& w = group.weights;
  if (direction != nullptr) *direction = Matrix(w.rows(), w.cols());
  double update_sq = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double before = w[i];
    const double decayed = before * shrink;
    s.adam_m[i] = acfg.beta1 * s.adam_m[i] + keep1 * g[i];
    s.adam_v[i] = acfg.beta2 * s.adam_v[i] + keep2 * (g[i] * g[i]);
    const double m_hat = s.adam_m[i] / bc1;
    const double v_hat = s.adam_v[i] / bc2;
    const double dir = m_hat / (std::sqrt(v_hat) + acfg.eps);
    w[i] = decayed - lr * dir;
    if (direction != nullptr) (*direction)[i] = dir;
    const double delta = w[i] - before;
    update_sq += delta * delta;
  }
  trace.momentum_norm = frobenius_norm(s.adam_m);
  trace.update_norm = std::sqrt(update_sq);
}

}  // namespace

std::string_view to_string(Precision p) {
  switch (p) {
    case Precision::fp32_buffered: return "fp32_buffered";
    case Precision::fp32_streaming: return "fp32_streaming";
    case Precision::bf16_streaming: return "bf16_streaming";
  }
  return "?";
}

Precision parse_precision(std::string_view s) {
  if (s == "fp32_buffered") return Precision::fp32_buffered;
  if (s == "fp32_streaming") return Precision::fp32_streaming;
  if (s == "bf16_streaming") return Precision::bf16_streaming;
  throw std::invalid_argument("unknown precision '" + std::string(s) +
                              "' (expected fp32_buffered, fp32_streaming or bf16_streaming)");
}

std::string_view to_string(ParamKind k) { return k == ParamKind::matrix ? "matrix" : "vector"; }

std::string_view to_string(StepRoute r) {
  switch (r) {
    case StepRoute::muon: return "muon";
    case StepRoute::mona: return "mona";
    case StepRoute::mona_lite: return "mona_lite";
    case StepRoute::adamw: return "adamw";
    case StepRoute::adamw_acc: return "adamw_acc";
  }
  return "?";
}

double GammaRule::scale(std::size_t rows, std::size_t cols) const {
  if (kind == Kind::fixed) return value;
  return 0.2 * std::sqrt(static_cast<double>(std::max(rows, cols)));
}

void OptimizerConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("learning_rate must be finite and >= 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must be in [0, 1)");
  AccelConfig{accel_beta, accel_alpha}.validate();
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be >= 0");
  if (gamma.kind == GammaRule::Kind::fixed && !(gamma.value > 0.0)) {
    throw std::invalid_argument("explicit gamma must be > 0");
  }
  ns.validate();
}

void AdamConfig::validate() const {
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("adam beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("adam beta2 must be in [0, 1)");
  if (!(eps > 0.0)) throw std::invalid_argument("adam eps must be > 0");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("adam weight_decay must be >= 0");
}

void AccelConfig::validate() const {
  if (!(beta >= 0.0 && beta < 1.0)) throw std::invalid_argument("accel_beta must be in [0, 1)");
  if (!std::isfinite(alpha) || !(std::abs(alpha) < 1.0 / (1.0 - beta))) {
    throw std::invalid_argument("accel_alpha must satisfy |alpha| < 1 / (1 - accel_beta)");
  }
}

ParamGroup::ParamGroup(std::string name_, Matrix weights_, ParamKind kind_)
    : name(std::move(name_)), kind(kind_), weights(std::move(weights_)) {}

ParamGroup::ParamGroup(std::string name_, Matrix weights_)
    : name(std::move(name_)), weights(std::move(weights_)) {
  kind = classify_param(name, weights.rows(), weights.cols());
}

StepRejected::StepRejected(std::string param, const std::string& why)
    : std::runtime_error("step rejected for '" + param + "': " + why), param_(std::move(param)) {}

StepTrace mona_step(ParamGroup& group, const Matrix& grad, const OptimizerConfig& cfg,
                    Matrix* direction) {
  const auto start = Clock::now();
  require_matrix(group, "mona_step");
  check_gradient(group, grad);

  StepTrace trace;
  trace.route = StepRoute::mona;
  trace.grad_norm = frobenius_norm(grad);

  ParamState& s = group.state;
  ensure_allocated(s.momentum, grad);
  const Matrix accelerated = accelerate_buffered(s, grad, cfg.accel_beta, cfg.accel_alpha, trace);
  for (std::size_t i = 0; i < s.momentum.size(); ++i) {
    s.momentum[i] = cfg.momentum * s.momentum[i] + accelerated[i];
  }
  trace.momentum_norm = frobenius_norm(s.momentum);
  orthogonal_update(group, cfg, trace, direction);
  s.step += 1;
  trace.inner_ns = elapsed_ns(start);
  return trace;
}

StepTrace muon_step(ParamGroup& group, const Matrix& grad, const OptimizerConfig& cfg,
                    Matrix* direction) {
  const auto start = Clock::now();
  require_matrix(group, "muon_step");
  check_gradient(group, grad);

  StepTrace trace;
  trace.route = StepRoute::muon;
  trace.grad_norm = frobenius_norm(grad);
  trace.accel_grad_norm = trace.grad_norm;

  ParamState& s = group.state;
  ensure_allocated(s.momentum, grad);
  for (std::size_t i = 0; i < s.momentum.size(); ++i) {
    s.momentum[i] = cfg.momentum * s.momentum[i] + grad[i];
  }
  trace.momentum_norm = frobenius_norm(s.momentum);
  orthogonal_update(group, cfg, trace, direction);
  s.step += 1;
  trace.inner_ns = elapsed_ns(start);
  return trace;
}

StepTrace mona_lite_step(ParamGroup& group, const Matrix& grad, const OptimizerConfig& cfg,
                         Matrix* direction) {
  const auto start = Clock::now();
  require_matrix(group, "mona_lite_step");
  if (cfg.precision == Precision::fp32_buffered) {
    throw std::invalid_argument("mona_lite_step needs fp32_streaming or bf16_streaming precision");
  }
  check_gradient(group, grad);

  StepTrace trace;
  trace.route = StepRoute::mona_lite;

  ParamState& s = group.state;
  const std::size_t n = grad.size();
  ensure_allocated(s.momentum, grad);
  const bool bf16 = cfg.precision == Precision::bf16_streaming;
  if (bf16) {
    ensure_allocated(s.accel_bf16, n);
    ensure_allocated(s.grad_slot_bf16, n);
  } else {
    ensure_allocated(s.accel, grad);
    ensure_allocated(s.grad_slot, grad);
  }

  const double beta = cfg.accel_beta;
  const double keep = 1.0 - beta;
  const double alpha = cfg.accel_alpha;
  const double mu = cfg.momentum;
  double grad_sq = 0.0;
  double diff_sq = 0.0;
  double accel_sq = 0.0;
  double accel_grad_sq = 0.0;
  // One pass: read the slot, overwrite it with G_k, update A and M.
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    double d = 0.0;
    double a = 0.0;
    if (bf16) {
      d = g - bf16_decode(s.grad_slot_bf16[i]);
      s.grad_slot_bf16[i] = bf16_round(g);
      a = beta * bf16_decode(s.accel_bf16[i]) + keep * d;
      s.accel_bf16[i] = bf16_round(a);
    } else {
      d = g - s.grad_slot[i];
      s.grad_slot[i] = g;
      a = beta * s.accel[i] + keep * d;
      s.accel[i] = a;
    }
    const double accelerated = g + alpha * a;
    s.momentum[i] = mu * s.momentum[i] + accelerated;
    grad_sq += g * g;
    diff_sq += d * d;
    accel_sq += a * a;
    accel_grad_sq += accelerated * accelerated;
  }
  trace.grad_norm = std::sqrt(grad_sq);
  trace.diff_norm = std::sqrt(diff_sq);
  trace.accel_norm = std::sqrt(accel_sq);
  trace.accel_grad_norm = std::sqrt(accel_grad_sq);
  trace.momentum_norm = frobenius_norm(s.momentum);
  orthogonal_update(group, cfg, trace, direction);
  s.step += 1;
  trace.inner_ns = elapsed_ns(start);
  return trace;
}

StepTrace adamw_step(ParamGroup& group, const Matrix& grad, const AdamConfig& acfg, double lr,
                     Matrix* direction) {
  const auto start = Clock::now();
  check_gradient(group, grad);
  StepTrace trace;
  trace.route = StepRoute::adamw;
  trace.grad_norm = frobenius_norm(grad);
  trace.accel_grad_norm = trace.grad_norm;
  adam_update(group, grad, acfg, lr, trace, direction);
  trace.inner_ns = elapsed_ns(start);
  return trace;
}

StepTrace adamw_acc_step(ParamGroup& group, const Matrix& grad, const AdamConfig& acfg,
                         const AccelConfig& accel, double lr, Matrix* direction) {
  const auto start = Clock::now();
  check_gradient(group, grad);
  StepTrace trace;
  trace.route = StepRoute::adamw_acc;
  trace.grad_norm = frobenius_norm(grad);
  const Matrix accelerated = accelerate_buffered(group.state, grad, accel.beta, accel.alpha, trace);
  adam_update(group, accelerated, acfg, lr, trace, direction);
  trace.inner_ns = elapsed_ns(start);
  return trace;
}

double default_alpha(double beta_a) {
  if (!(beta_a >= 0.0 && beta_a < 1.0)) {
    throw std::invalid_argument("default_alpha: beta_a must be in [0, 1)");
  }
  return -1.0 / (2.0 * (1.0 - beta_a));
}

const std::vector<std::string>& default_vector_patterns() {
  static const std::vector<std::string> patterns{"embed", "head"};
  return patterns;
}

ParamKind classify_param(std::string_view name, std::size_t rows, std::size_t cols,
                         std::span<const std::string> vector_patterns) {
  if (rows <= 1 || cols <= 1) return ParamKind::vector;
  std::string lowered(name);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (const auto& pattern : vector_patterns) {
    std::string p = pattern;
    std::transform(p.begin(), p.end(), p.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (!p.empty() && lowered.find(p) != std::string::npos) return ParamKind::vector;
  }
  return ParamKind::matrix;
}

std::size_t auxiliary_state_bytes(Precision precision, std::size_t numel) {
  switch (precision) {
    case Precision::fp32_buffered: return 2 * 4 * numel;
    case Precision::fp32_streaming: return 4 * numel;
    case Precision::bf16_streaming: return 2 * numel;
  }
  return 0;
}

std::string_view to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::adamw: return "adamw";
    case OptimizerKind::adamw_acc: return "adamw_acc";
    case OptimizerKind::muon: return "muon";
    case OptimizerKind::mona: return "mona";
    case OptimizerKind::mona_lite: return "mona_lite";
  }
  return "?";
}

OptimizerKind parse_optimizer_kind(std::string_view s) {
  if (s == "adamw") return OptimizerKind::adamw;
  if (s == "adamw_acc") return OptimizerKind::adamw_acc;
  if (s == "muon") return OptimizerKind::muon;
  if (s == "mona") return OptimizerKind::mona;
  if (s == "mona_lite") return OptimizerKind::mona_lite;
  throw std::invalid_argument("unknown optimizer '" + std::string(s) +
                              "' (expected adamw, adamw_acc, muon, mona or mona_lite)");
}

void OptimizerSpec::validate() const {
  config.validate();
  adam.validate();
  if (kind == OptimizerKind::mona_lite && config.precision == Precision::fp32_buffered) {
    throw std::invalid_argument("optimizer '" + name +
                                "': mona_lite needs fp32_streaming or bf16_streaming precision");
  }
}

double OptimizerSpec::vector_lr() const {
  return fallback_lr > 0.0 ? fallback_lr : config.learning_rate;
}

StepTrace step_param(const OptimizerSpec& spec, ParamGroup& group, const Matrix& grad,
                     Matrix* direction) {
  const bool is_vector = group.kind == ParamKind::vector;
  AdamConfig adam = spec.adam;
  switch (spec.kind) {
    case OptimizerKind::adamw:
    case OptimizerKind::adamw_acc: {
      if (!is_vector) adam.weight_decay = spec.config.weight_decay;
      const double lr = spec.config.learning_rate;
      if (spec.kind == OptimizerKind::adamw) return adamw_step(group, grad, adam, lr, direction);
      return adamw_acc_step(group, grad, adam,
                            AccelConfig{spec.config.accel_beta, spec.config.accel_alpha}, lr,
                            direction);
    }
    case OptimizerKind::muon:
    case OptimizerKind::mona:
    case OptimizerKind::mona_lite:
      if (is_vector) return adamw_step(group, grad, adam, spec.vector_lr(), direction);
      if (spec.kind == OptimizerKind::muon) return muon_step(group, grad, spec.config, direction);
      if (spec.kind == OptimizerKind::mona) return mona_step(group, grad, spec.config, direction);
      return mona_lite_step(group, grad, spec.config, direction);
  }
  throw std::logic_error("unhandled optimizer kind");
}

}  // namespace mona
