// SPDX-License-Identifier: Apache-2.0
#include "mona/toynet.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

#include "mona/analysis.hpp"

namespace mona {

namespace {

enum StreamTag : std::uint32_t { kTeacher = 1, kStudent = 2, kTrain = 3, kEval = 4 };

std::uint64_t derive_seed(std::uint64_t seed, std::uint32_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), tag};
  std::mt19937_64 rng(seq);
  return rng();
}

Matrix gaussian(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = normal(rng);
  return m;
}

void add_bias(Matrix& z, const Matrix& b) {
  for (std::size_t r = 0; r < z.rows(); ++r) {
    for (std::size_t c = 0; c < z.cols(); ++c) z(r, c) += b[c];
  }
}

void activate(Matrix& z, Activation a) {
  for (std::size_t i = 0; i < z.size(); ++i) {
    z[i] = a == Activation::tanh ? std::tanh(z[i]) : std::max(z[i], 0.0);
  }
}

using Clock = std::chrono::steady_clock;

}  // namespace

std::string_view to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }

Activation parse_activation(std::string_view s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  throw std::invalid_argument("unknown activation '" + std::string(s) + "' (expected tanh or relu)");
}

std::string_view to_string(RunStatus s) { return s == RunStatus::completed ? "completed" : "diverged"; }

void MlpSpec::validate() const {
  if (layer_dims.size() < 2) throw std::invalid_argument("layer_dims needs at least 2 entries");
  for (std::size_t d : layer_dims) {
    if (d == 0) throw std::invalid_argument("layer_dims entries must be positive");
  }
  if (!(init_scale > 0.0)) throw std::invalid_argument("init_scale must be > 0");
}

Mlp::Mlp(const MlpSpec& spec) : Mlp(spec, false) {}

Mlp Mlp::zeros(const MlpSpec& spec) { return Mlp(spec, true); }

Mlp::Mlp(const MlpSpec& spec, bool zero) : spec_(spec) {
  spec_.validate();
  std::mt19937_64 rng(spec_.init_seed);
  const double s = spec_.init_scale;
  for (std::size_t i = 0; i + 1 < spec_.layer_dims.size(); ++i) {
    const std::size_t in = spec_.layer_dims[i];
    const std::size_t out = spec_.layer_dims[i + 1];
    Matrix w = zero ? Matrix(in, out) : random_uniform(in, out, -s, s, rng);
    Matrix b = zero ? Matrix(out, 1) : random_uniform(out, 1, -s, s, rng);
    const std::string prefix = "layer" + std::to_string(i);
    params_.emplace_back(prefix + ".weight", std::move(w));
    params_.emplace_back(prefix + ".bias", std::move(b));
  }
}

Matrix Mlp::forward(const Matrix& x) const {
  if (x.cols() != spec_.layer_dims.front()) {
    throw DimensionError("Mlp::forward: input has " + std::to_string(x.cols()) + " features, net expects " +
                         std::to_string(spec_.layer_dims.front()));
  }
  Matrix h = x;
  for (std::size_t i = 0; i < num_layers(); ++i) {
    h = matmul(h, weight(i));
    add_bias(h, bias(i));
    if (i + 1 < num_layers()) activate(h, spec_.activation);
  }
  return h;
}

double Mlp::loss(const Matrix& x, const Matrix& y) const {
  const Matrix out = forward(x);
  require_same_shape(out, y, "Mlp::loss");
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double r = out[i] - y[i];
    s += r * r;
  }
  return s / static_cast<double>(x.rows());
}

double Mlp::forward_backward(const Matrix& x, const Matrix& y, std::vector<Matrix>& grads) const {
  if (x.cols() != spec_.layer_dims.front() || y.cols() != spec_.layer_dims.back() ||
      x.rows() != y.rows() || x.rows() == 0) {
    throw DimensionError("Mlp::forward_backward: batch " + x.shape_string() + " -> " +
                         y.shape_string() + " does not fit the net");
  }
  const std::size_t n = num_layers();
  std::vector<Matrix> acts;  // acts[i] is the input of layer i
  acts.reserve(n + 1);
  acts.push_back(x);
  for (std::size_t i = 0; i < n; ++i) {
    Matrix z = matmul(acts.back(), weight(i));
    add_bias(z, bias(i));
    if (i + 1 < n) activate(z, spec_.activation);
    acts.push_back(std::move(z));
  }

  const double batch = static_cast<double>(x.rows());
  const Matrix& out = acts.back();
  Matrix delta(out.rows(), out.cols());
  double loss = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double r = out[i] - y[i];
    loss += r * r;
    delta[i] = 2.0 * r / batch;
  }
  loss /= batch;

  grads.assign(params_.size(), Matrix());
  for (std::size_t li = n; li-- > 0;) {
    grads[2 * li] = matmul(transpose(acts[li]), delta);
    Matrix gb(delta.cols(), 1);
    for (std::size_t r = 0; r < delta.rows(); ++r) {
      for (std::size_t c = 0; c < delta.cols(); ++c) gb[c] += delta(r, c);
    }
    grads[2 * li + 1] = std::move(gb);
    if (li == 0) break;
    Matrix back = matmul(delta, transpose(weight(li)));
    const Matrix& h = acts[li];
    for (std::size_t i = 0; i < back.size(); ++i) {
      // h = act(z): tanh' = 1 - h^2, relu' = [h > 0].
      back[i] *= spec_.activation == Activation::tanh ? 1.0 - h[i] * h[i] : (h[i] > 0.0 ? 1.0 : 0.0);
    }
    delta = std::move(back);
  }
  return loss;
}

void TeacherStudentSpec::validate() const {
  MlpSpec{layer_dims, activation, 0, teacher_scale}.validate();
  if (!(student_scale > 0.0)) throw std::invalid_argument("student_scale must be > 0");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (eval_size == 0) throw std::invalid_argument("eval_size must be positive");
}

TeacherStudentTask::TeacherStudentTask(const TeacherStudentSpec& spec, std::uint64_t seed)
    : spec_(spec),
      seed_(seed),
      teacher_(MlpSpec{spec.layer_dims, spec.activation, derive_seed(seed, kTeacher),
                       spec.teacher_scale}) {
  spec_.validate();
  std::mt19937_64 rng(derive_seed(seed, kEval));
  eval_x_ = gaussian(spec_.eval_size, spec_.layer_dims.front(), rng);
  eval_y_ = teacher_.forward(eval_x_);
}

Mlp TeacherStudentTask::make_student() const {
  return Mlp(MlpSpec{spec_.layer_dims, spec_.activation, derive_seed(seed_, kStudent),
                     spec_.student_scale});
}

std::mt19937_64 TeacherStudentTask::training_stream() const {
  return std::mt19937_64(derive_seed(seed_, kTrain));
}

void TeacherStudentTask::sample_batch(std::mt19937_64& rng, Matrix& x, Matrix& y) const {
  x = gaussian(spec_.batch_size, spec_.layer_dims.front(), rng);
  y = teacher_.forward(x);
}

double TeacherStudentTask::eval_loss(const Mlp& net) const { return net.loss(eval_x_, eval_y_); }

TrainResult train(const TeacherStudentTask& task, const OptimizerSpec& optimizer,
                  const TrainOptions& options) {
  optimizer.validate();
  if (options.eval_every == 0) throw std::invalid_argument("eval_every must be positive");

  TrainResult result;
  Mlp net = task.make_student();
  std::vector<ParamGroup>& params = net.params();
  std::vector<std::optional<LemmaMonitor>> monitors(params.size());
  std::mt19937_64 stream = task.training_stream();
  std::vector<Matrix> grads;
  Matrix x;
  Matrix y;
  result.records.reserve(options.steps);

  for (std::uint64_t k = 1; k <= options.steps; ++k) {
    const auto iter_start = Clock::now();
    task.sample_batch(stream, x, y);
    RunRecord rec;
    rec.step = k;
    rec.eval_loss = std::numeric_limits<double>::quiet_NaN();
    rec.train_loss = net.forward_backward(x, y, grads);
    if (!std::isfinite(rec.train_loss) || rec.train_loss > options.divergence_threshold) {
      result.status = RunStatus::diverged;
      result.message = "training loss " + std::to_string(rec.train_loss) + " at step " + std::to_string(k);
      result.records.push_back(rec);
      break;
    }

    double g2 = 0, d2 = 0, a2 = 0, ag2 = 0, m2 = 0, o2 = 0, u2 = 0;
    bool fallback = true;
    try {
      for (std::size_t p = 0; p < params.size(); ++p) {
        const StepTrace t = step_param(optimizer, params[p], grads[p]);
        rec.inner_ns += t.inner_ns;
        g2 += t.grad_norm * t.grad_norm;
        d2 += t.diff_norm * t.diff_norm;
        a2 += t.accel_norm * t.accel_norm;
        ag2 += t.accel_grad_norm * t.accel_grad_norm;
        m2 += t.momentum_norm * t.momentum_norm;
        o2 += t.ortho_norm * t.ortho_norm;
        u2 += t.update_norm * t.update_norm;
        rec.ns_degenerate += t.ns_degenerate ? 1 : 0;
        if (params[p].kind == ParamKind::vector && t.route != StepRoute::adamw) fallback = false;
        if (!monitors[p]) monitors[p].emplace(lemma_settings_for(t.route, optimizer.config));
        rec.lemma_violations +=
            static_cast<std::uint32_t>(monitors[p]->observe(norm_sample(k, t)).size());
      }
    } catch (const StepRejected& e) {
      result.status = RunStatus::diverged;
      result.message = e.what();
      result.records.push_back(rec);
      break;
    }
    rec.grad_norm = std::sqrt(g2);
    rec.diff_norm = std::sqrt(d2);
    rec.accel_norm = std::sqrt(a2);
    rec.accel_grad_norm = std::sqrt(ag2);
    rec.momentum_norm = std::sqrt(m2);
    rec.ortho_norm = std::sqrt(o2);
    rec.update_norm = std::sqrt(u2);
    rec.vector_fallback = fallback;
    result.lemma_violations += rec.lemma_violations;

    if (k % options.eval_every == 0 || k == options.steps) {
      rec.eval_loss = task.eval_loss(net);
      if (!std::isfinite(rec.eval_loss) || rec.eval_loss > options.divergence_threshold) {
        result.status = RunStatus::diverged;
        result.message = "held-out loss " + std::to_string(rec.eval_loss) + " at step " + std::to_string(k);
      }
    }
    rec.iter_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - iter_start).count();
    result.records.push_back(rec);
    if (result.status == RunStatus::diverged) break;
  }

  result.final_eval_loss = task.eval_loss(net);
  result.params = std::move(params);
  return result;
}

}  // namespace mona
