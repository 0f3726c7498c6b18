// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mona/bf16.hpp"
#include "mona/matrix.hpp"
#include "mona/orthogonalize.hpp"

namespace mona {

enum class ParamKind { matrix, vector };

/// How the acceleration state is stored.
///
/// fp32_buffered keeps a dedicated previous-gradient buffer next to A.
/// The streaming modes fold the gradient difference into one pass over a
/// gradient slot that is overwritten with G_k, and bf16_streaming additionally
/// stores A and the slot as bfloat16. Working arithmetic is always double.
enum class Precision { fp32_buffered, fp32_streaming, bf16_streaming };

std::string_view to_string(Precision p);
Precision parse_precision(std::string_view s);
std::string_view to_string(ParamKind k);

/// Per-parameter update scale gamma.
struct GammaRule {
  enum class Kind { muon_rms_match, fixed };
  Kind kind = Kind::muon_rms_match;
  double value = 0.0;

  static GammaRule muon_rms_match() { return {}; }
  static GammaRule fixed(double v) { return {Kind::fixed, v}; }

  /// 0.2 * sqrt(max(rows, cols)) for muon_rms_match, else the fixed value.
  double scale(std::size_t rows, std::size_t cols) const;
};

/// Hyperparameters of the orthogonalized family (Muon, MONA, MONA-Lite).
struct OptimizerConfig {
  double learning_rate = 0.02;
  double momentum = 0.95;
  double accel_beta = 0.99;
  double accel_alpha = -50.0;
  double weight_decay = 0.1;
  NsConfig ns;
  GammaRule gamma;
  Precision precision = Precision::fp32_buffered;

  /// Rejects out-of-range values, including |alpha| >= 1 / (1 - beta_a).
  void validate() const;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.0;

  void validate() const;
};

struct AccelConfig {
  double beta = 0.99;
  double alpha = -50.0;

  void validate() const;
};

/// Optimizer buffers for one parameter. Buffers are allocated (zeroed) on
/// the first step that needs them, which realizes M_0 = A_0 = G_0 = 0.
struct ParamState {
  Matrix momentum;
  Matrix accel;
  Matrix prev_grad;
  Matrix grad_slot;
  std::vector<Bf16> accel_bf16;
  std::vector<Bf16> grad_slot_bf16;
  Matrix adam_m;
  Matrix adam_v;
  std::uint64_t step = 0;
};

struct ParamGroup {
  std::string name;
  ParamKind kind = ParamKind::matrix;
  Matrix weights;
  ParamState state;

  ParamGroup() = default;
  ParamGroup(std::string name, Matrix weights, ParamKind kind);
  /// Kind chosen by classify_param with the default name patterns.
  ParamGroup(std::string name, Matrix weights);
};

enum class StepRoute { muon, mona, mona_lite, adamw, adamw_acc };
std::string_view to_string(StepRoute r);

/// Norms observed during one step, taken before any state is overwritten
/// where that matters (grad, D, A, G~ and M of the current step).
struct StepTrace {
  double grad_norm = 0.0;
  double diff_norm = 0.0;
  double accel_norm = 0.0;
  double accel_grad_norm = 0.0;
  double momentum_norm = 0.0;
  double ortho_norm = 0.0;
  double update_norm = 0.0;
  bool ns_degenerate = false;
  StepRoute route = StepRoute::muon;
  std::int64_t inner_ns = 0;
};

/// A step refused because the gradient is unusable. State is untouched.
class StepRejected : public std::runtime_error {
 public:
  StepRejected(std::string param, const std::string& why);
  const std::string& param() const noexcept { return param_; }

 private:
  std::string param_;
};

/// MONA on a matrix parameter, fp32_buffered layout:
///   D = G - G_prev; A = b_a A + (1 - b_a) D; G~ = G + alpha A;
///   M = mu M + G~; O = NS(M); W -= lr (gamma O + lambda W); G_prev = G.
/// If `direction` is non-null it receives O.
StepTrace mona_step(ParamGroup& group, const Matrix& grad, const OptimizerConfig& cfg,
                    Matrix* direction = nullptr);

/// Muon: M = mu M + G; O = NS(M); W -= lr (gamma O + lambda W).
StepTrace muon_step(ParamGroup& group, const Matrix& grad, const OptimizerConfig& cfg,
                    Matrix* direction = nullptr);

/// MONA with a streaming gradient slot; requires a streaming precision.
/// Same arithmetic as mona_step, fused into one pass; in bf16_streaming the
/// slot and A are rounded to bfloat16 when stored.
StepTrace mona_lite_step(ParamGroup& group, const Matrix& grad, const OptimizerConfig& cfg,
                         Matrix* direction = nullptr);

/// AdamW with bias correction; decoupled decay W *= (1 - lr * wd) is applied
/// before the moment term.
StepTrace adamw_step(ParamGroup& group, const Matrix& grad, const AdamConfig& acfg, double lr,
                     Matrix* direction = nullptr);

/// AdamW fed with the accelerated gradient G~ = G + alpha A instead of G.
StepTrace adamw_acc_step(ParamGroup& group, const Matrix& grad, const AdamConfig& acfg,
                         const AccelConfig& accel, double lr, Matrix* direction = nullptr);

/// The shared (beta_a, alpha) rule alpha = -1 / (2 (1 - beta_a)).
double default_alpha(double beta_a);

const std::vector<std::string>& default_vector_patterns();

/// Matrix if both dimensions exceed 1 and the name matches none of the
/// patterns (substring match, case-insensitive); vector otherwise.
ParamKind classify_param(std::string_view name, std::size_t rows, std::size_t cols,
                         std::span<const std::string> vector_patterns = default_vector_patterns());

/// Nominal bytes of acceleration state beyond what Muon keeps, per storage
/// format: a dedicated G_prev and A at 4 bytes each when buffered, only A when
/// streaming (the slot is the gradient buffer the trainer already owns), and
/// 2-byte A under bf16.
std::size_t auxiliary_state_bytes(Precision precision, std::size_t numel);

// ---------------------------------------------------------------------------
// Named optimizer selection, as used by experiment configs.

enum class OptimizerKind { adamw, adamw_acc, muon, mona, mona_lite };
std::string_view to_string(OptimizerKind k);
/// Throws std::invalid_argument naming the unknown value.
OptimizerKind parse_optimizer_kind(std::string_view s);

struct OptimizerSpec {
  std::string name;
  OptimizerKind kind = OptimizerKind::mona;
  /// Learning rate, momentum, acceleration, matrix weight decay, NS and gamma.
  /// The AdamW family reads learning_rate, weight_decay and the acceleration
  /// pair from here too.
  OptimizerConfig config;
  /// Moments for the AdamW family and for the vector-parameter fallback.
  /// Its weight_decay applies to vector parameters.
  AdamConfig adam;
  /// Learning rate of the vector fallback; <= 0 means config.learning_rate.
  double fallback_lr = 0.0;

  void validate() const;
  double vector_lr() const;
};

/// Routes one parameter to the right update: matrix parameters to the kind's
/// update, vector parameters of the orthogonalized family to the AdamW
/// fallback.
StepTrace step_param(const OptimizerSpec& spec, ParamGroup& group, const Matrix& grad,
                     Matrix* direction = nullptr);

}  // namespace mona
