// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mona/analysis.hpp"
#include "mona/landscapes.hpp"
#include "mona/optimizers.hpp"
#include "mona/toynet.hpp"

namespace mona {

/// Invalid experiment configuration; `field` is a dotted path such as
/// "optimizers[1].type".
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& message);
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Artifacts could not be written or read.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TaskType { teacher_student, quadratic, double_well };
std::string_view to_string(TaskType t);

struct TaskConfig {
  TaskType type = TaskType::teacher_student;
  TeacherStudentSpec teacher_student;

  // Landscape tasks. The parameter is rows x cols and always treated as a
  // matrix.
  std::size_t rows = 1;
  std::size_t cols = 2;
  std::vector<double> eigs{4.0, 1.0};
  bool rotated = false;  // random eigenbasis drawn from basis_seed
  std::uint64_t basis_seed = 0;
  std::vector<double> init;  // row-major; empty means the task default
  EscapeStart start = EscapeStart::sharp;
  double noise_sigma = 0.1;
  double clip_bound = 1e3;
};

struct ExperimentConfig {
  std::string name = "experiment";
  TaskConfig task;
  std::vector<OptimizerSpec> optimizers;
  std::uint64_t steps = 1000;
  std::vector<std::uint64_t> seeds{0};
  std::uint64_t eval_every = 100;
  std::string output_dir;  // empty: "runs/<name>"
  bool write_checkpoints = true;
  bool record_timings = false;
  unsigned threads = 0;  // 0: hardware concurrency
};

/// Parses and validates a JSON config. Missing fields take defaults;
/// optimizer blocks without accel_alpha get default_alpha(accel_beta); a
/// top-level "precision" applies to optimizer blocks that do not set one.
ExperimentConfig parse_experiment_config(std::string_view text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path, std::string* raw_text = nullptr);

/// Every field, defaults included, as pretty-printed JSON.
std::string resolved_config_json(const ExperimentConfig& cfg);

/// Output directory after applying MONA_OUTPUT_ROOT to a relative path.
std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg);

/// Fixed CSV layout; numbers use 17 significant digits.
std::string run_csv_header();
std::string run_csv_row(const RunRecord& r);
std::string format_number(double v);

struct CellResult {
  std::string optimizer;
  std::uint64_t seed = 0;
  RunStatus status = RunStatus::completed;
  std::string message;
  double final_eval_loss = 0.0;
  std::size_t lemma_violations = 0;
  bool fallback_ok = true;
  std::filesystem::path csv_path;
};

struct ExperimentResult {
  std::filesystem::path output_dir;
  std::vector<CellResult> cells;
  VerificationReport report;
};

/// Runs every (optimizer, seed) cell, writes one CSV per cell, summary.csv,
/// the config echo (verbatim and resolved), checkpoints and the
/// verification report. Throws IoError when artifacts cannot be written.
ExperimentResult run_experiment(const ExperimentConfig& cfg, std::string_view raw_config_text);

/// One cell in memory, without touching disk.
TrainResult run_cell(const ExperimentConfig& cfg, const OptimizerSpec& opt, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Timing.

struct BenchConfig {
  std::size_t rows = 1024;
  std::size_t cols = 1024;
  std::size_t batch = 256;  // inner dimension of the synthetic forward/backward
  std::uint64_t steps = 1000;
  std::uint64_t warmup = 10;
  std::uint64_t seed = 0;
  OptimizerConfig optimizer;
};

BenchConfig parse_bench_config(std::string_view text);

struct BenchArm {
  std::string name;
  double median_inner_ns = 0.0;
  double median_iter_ns = 0.0;
};

struct BenchReport {
  BenchArm muon;
  BenchArm muon_control;
  BenchArm mona;
  std::uint64_t steps = 0;
  // Relative overheads are medians of per-round paired ratios minus one.
  double control_inner = 0.0;  // muon_control vs muon
  double control_iter = 0.0;
  double noise_band = 0.0;     // max(1%, |control_iter|)
  double mona_inner = 0.0;     // mona vs muon
  double mona_iter = 0.0;
  bool inner_ok = false;       // mona_inner <= 5%
  bool iter_ok = false;        // |mona_iter| <= 2 * noise_band

  std::string to_text() const;
};

/// Three interleaved arms (Muon, a second Muon, MONA) from the same initial
/// weights. Each arm's step computes G = (W X - Y) X^T / batch as a stand-in
/// forward/backward and then its optimizer step; warmup rounds are dropped.
BenchReport bench_overhead(const BenchConfig& cfg);

// ---------------------------------------------------------------------------
// Self-check suite.

struct CheckOptions {
  /// Multiplies the three NS coefficients (1 = pristine).
  double ns_coeff_scale = 1.0;
  /// -1 flips the sign of the default alpha rule (mutation control).
  double alpha_sign = 1.0;
  /// Smaller fixtures for quick runs.
  bool quick = false;
};

VerificationReport check_suite(const CheckOptions& options = {});

}  // namespace mona
