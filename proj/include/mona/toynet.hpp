// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mona/matrix.hpp"
#include "mona/optimizers.hpp"

namespace mona {

enum class Activation { tanh, relu };
std::string_view to_string(Activation a);
Activation parse_activation(std::string_view s);

struct MlpSpec {
  std::vector<std::size_t> layer_dims{4, 16, 16, 4};
  Activation activation = Activation::tanh;
  std::uint64_t init_seed = 0;
  double init_scale = 0.5;

  void validate() const;
};

/// Fully connected net, row-vector convention: h_{i+1} = act(h_i W_i + b_i)
/// with W_i of shape in x out and b_i of shape out x 1. The last layer is
/// linear. Parameters are ParamGroups "layer{i}.weight" and "layer{i}.bias"
/// in that order, so an optimizer can update them in place.
class Mlp {
 public:
  /// Weights and biases drawn from uniform(-init_scale, init_scale).
  explicit Mlp(const MlpSpec& spec);
  static Mlp zeros(const MlpSpec& spec);

  const MlpSpec& spec() const { return spec_; }
  std::size_t num_layers() const { return spec_.layer_dims.size() - 1; }
  std::vector<ParamGroup>& params() { return params_; }
  const std::vector<ParamGroup>& params() const { return params_; }
  const Matrix& weight(std::size_t layer) const { return params_[2 * layer].weights; }
  const Matrix& bias(std::size_t layer) const { return params_[2 * layer + 1].weights; }

  /// x is batch x input_dim.
  Matrix forward(const Matrix& x) const;
  /// Mean over the batch of the squared error summed over outputs.
  double loss(const Matrix& x, const Matrix& y) const;
  /// Loss plus exact gradients, one per entry of params().
  double forward_backward(const Matrix& x, const Matrix& y, std::vector<Matrix>& grads) const;

 private:
  Mlp(const MlpSpec& spec, bool zero);
  MlpSpec spec_;
  std::vector<ParamGroup> params_;
};

struct TeacherStudentSpec {
  std::vector<std::size_t> layer_dims{4, 16, 16, 4};
  Activation activation = Activation::tanh;
  double teacher_scale = 1.0;
  double student_scale = 0.5;
  std::size_t batch_size = 32;
  std::size_t eval_size = 512;

  void validate() const;
};

/// Student learns a frozen teacher of the same architecture from Gaussian
/// inputs. One seed fixes teacher, student init, the training stream and the
/// held-out batch, each from its own derived stream.
class TeacherStudentTask {
 public:
  TeacherStudentTask(const TeacherStudentSpec& spec, std::uint64_t seed);

  const TeacherStudentSpec& spec() const { return spec_; }
  const Mlp& teacher() const { return teacher_; }
  Mlp make_student() const;
  std::mt19937_64 training_stream() const;
  /// Draws the next training batch from rng.
  void sample_batch(std::mt19937_64& rng, Matrix& x, Matrix& y) const;
  double eval_loss(const Mlp& net) const;

 private:
  TeacherStudentSpec spec_;
  std::uint64_t seed_;
  Mlp teacher_;
  Matrix eval_x_;
  Matrix eval_y_;
};

/// One row per training step. Norms are taken over all parameters
/// (square root of the sum of per-parameter squares).
struct RunRecord {
  std::uint64_t step = 0;
  double train_loss = 0.0;
  double eval_loss = 0.0;  // NaN on steps without evaluation
  double grad_norm = 0.0;
  double diff_norm = 0.0;
  double accel_norm = 0.0;
  double accel_grad_norm = 0.0;
  double momentum_norm = 0.0;
  double ortho_norm = 0.0;
  double update_norm = 0.0;
  std::uint32_t ns_degenerate = 0;     // parameters whose NS input was degenerate
  std::uint32_t lemma_violations = 0;  // boundedness violations at this step
  bool vector_fallback = false;        // every vector parameter went through AdamW
  std::int64_t inner_ns = 0;           // optimizer step bodies
  std::int64_t iter_ns = 0;            // forward, backward and step
};

enum class RunStatus { completed, diverged };
std::string_view to_string(RunStatus s);

struct TrainOptions {
  std::uint64_t steps = 1000;
  std::uint64_t eval_every = 100;
  /// Loss above this (or non-finite) ends the run as diverged.
  double divergence_threshold = 1e6;
};

struct TrainResult {
  RunStatus status = RunStatus::completed;
  std::string message;
  std::vector<RunRecord> records;
  double final_eval_loss = 0.0;
  std::size_t lemma_violations = 0;
  std::vector<ParamGroup> params;  // final student parameters and optimizer state
};

TrainResult train(const TeacherStudentTask& task, const OptimizerSpec& optimizer,
                  const TrainOptions& options);

}  // namespace mona
