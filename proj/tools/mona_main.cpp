// SPDX-License-Identifier: Apache-2.0
// mona: experiment runner, overhead benchmark, check suite and checkpoint
// inspector.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "mona/checkpoint.hpp"
#include "mona/experiment.hpp"

namespace {

enum Exit : int { kOk = 0, kInvalid = 1, kCheckFailed = 2, kIoFailed = 3 };

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw mona::IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw mona::IoError("cannot read " + path);
  return ss.str();
}

int cmd_run(const std::string& path, bool quiet) {
  const std::string text = read_text(path);
  const mona::ExperimentConfig cfg = mona::parse_experiment_config(text);
  const mona::ExperimentResult result = mona::run_experiment(cfg, text);
  if (!quiet) {
    for (const auto& c : result.cells) {
      std::printf("%-16s seed %-6llu %-9s final eval loss %s%s%s\n", c.optimizer.c_str(),
                  static_cast<unsigned long long>(c.seed),
                  c.status == mona::RunStatus::completed ? "completed" : "diverged",
                  mona::format_number(c.final_eval_loss).c_str(), c.message.empty() ? "" : "  ",
                  c.message.c_str());
    }
    std::cout << result.report.to_text();
  }
  std::printf("artifacts: %s\n", result.output_dir.string().c_str());
  return result.report.ok() ? kOk : kCheckFailed;
}

int cmd_bench(const std::string& path) {
  const mona::BenchConfig cfg = mona::parse_bench_config(read_text(path));
  const mona::BenchReport r = mona::bench_overhead(cfg);
  std::cout << r.to_text();
  return r.inner_ok && r.iter_ok ? kOk : kCheckFailed;
}

int cmd_check(const mona::CheckOptions& opts, bool json) {
  const mona::VerificationReport rep = mona::check_suite(opts);
  std::cout << (json ? rep.to_json() + "\n" : rep.to_text());
  return rep.ok() ? kOk : kCheckFailed;
}

int cmd_inspect(const std::string& path) {
  const mona::Checkpoint ckpt = mona::load_checkpoint(path);
  std::cout << mona::describe_checkpoint(ckpt);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MONA optimizer experiments and verification"};
  app.require_subcommand(1);

  std::string config_path;
  std::string ckpt_path;
  bool quiet = false;
  bool json = false;
  mona::CheckOptions check_opts;

  auto* run = app.add_subcommand("run", "Run an experiment config and write CSVs, summary and report");
  run->add_option("config", config_path, "Experiment config (JSON)")->required();
  run->add_flag("-q,--quiet", quiet, "Only print the artifact directory");

  auto* bench = app.add_subcommand("bench", "Time MONA against Muon (with a Muon control arm)");
  bench->add_option("config", config_path, "Bench config (JSON with a \"bench\" object)")->required();

  auto* check = app.add_subcommand("check", "Run the verification checks on fresh fixture runs");
  check->add_flag("--quick", check_opts.quick, "Shorter fixture runs");
  check->add_flag("--json", json, "Print the report as JSON");
  check->add_option("--ns-coeff-scale", check_opts.ns_coeff_scale,
                    "Multiply the Newton-Schulz coefficients (negative control)");
  check->add_option("--alpha-sign", check_opts.alpha_sign,
                    "Sign applied to the default alpha rule (negative control)")
      ->check(CLI::IsMember({-1.0, 1.0}));

  auto* inspect = app.add_subcommand("inspect", "Print checkpoint buffer names, shapes and norms");
  inspect->add_option("checkpoint", ckpt_path, "Checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    if (*run) return cmd_run(config_path, quiet);
    if (*bench) return cmd_bench(config_path);
    if (*check) return cmd_check(check_opts, json);
    return cmd_inspect(ckpt_path);
  } catch (const mona::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kInvalid;
  } catch (const mona::IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kIoFailed;
  } catch (const mona::CheckpointError& e) {
    std::fprintf(stderr, "checkpoint error: %s\n", e.what());
    return kIoFailed;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "invalid input: %s\n", e.what());
    return kInvalid;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kIoFailed;
  }
}
