// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>

#include <json.hpp>

#include "mona/experiment.hpp"

namespace mona {

namespace {

using Clock = std::chrono::steady_clock;

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    m = (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid))) / 2.0;
  }
  return m;
}

double number_or(const nlohmann::json& j, const char* key, double fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  if (!it->is_number()) throw ConfigError(std::string("bench.") + key, "expected a number");
  return it->get<double>();
}

std::uint64_t count_or(const nlohmann::json& j, const char* key, std::uint64_t fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  if (!it->is_number_integer() || it->get<std::int64_t>() < 0) {
    throw ConfigError(std::string("bench.") + key, "expected a non-negative integer");
  }
  return it->get<std::uint64_t>();
}

}  // namespace

BenchConfig parse_bench_config(std::string_view text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("<root>", std::string("not valid JSON: ") + e.what());
  }
  if (!root.is_object() || !root.contains("bench") || !root["bench"].is_object()) {
    throw ConfigError("bench", "expected a \"bench\" object");
  }
  const auto& b = root["bench"];
  static const char* known[] = {"rows", "cols", "batch", "steps", "warmup", "seed", "optimizer"};
  for (auto it = b.begin(); it != b.end(); ++it) {
    if (std::find_if(std::begin(known), std::end(known),
                     [&](const char* k) { return it.key() == k; }) == std::end(known)) {
      throw ConfigError("bench." + it.key(), "unknown field");
    }
  }
  BenchConfig cfg;
  cfg.rows = count_or(b, "rows", cfg.rows);
  cfg.cols = count_or(b, "cols", cfg.cols);
  cfg.batch = count_or(b, "batch", cfg.batch);
  cfg.steps = count_or(b, "steps", cfg.steps);
  cfg.warmup = count_or(b, "warmup", cfg.warmup);
  cfg.seed = count_or(b, "seed", cfg.seed);
  if (cfg.rows == 0 || cfg.cols == 0 || cfg.batch == 0) {
    throw ConfigError("bench.rows", "rows, cols and batch must be positive");
  }
  if (cfg.steps == 0) throw ConfigError("bench.steps", "must be positive");
  if (auto it = b.find("optimizer"); it != b.end()) {
    const auto& o = *it;
    if (!o.is_object()) throw ConfigError("bench.optimizer", "expected an object");
    for (auto f = o.begin(); f != o.end(); ++f) {
      const std::string& k = f.key();
      if (k != "learning_rate" && k != "momentum" && k != "accel_beta" && k != "accel_alpha" &&
          k != "weight_decay") {
        throw ConfigError("bench.optimizer." + k, "unknown field");
      }
    }
    cfg.optimizer.learning_rate = number_or(o, "learning_rate", cfg.optimizer.learning_rate);
    cfg.optimizer.momentum = number_or(o, "momentum", cfg.optimizer.momentum);
    cfg.optimizer.accel_beta = number_or(o, "accel_beta", cfg.optimizer.accel_beta);
    cfg.optimizer.accel_alpha =
        number_or(o, "accel_alpha", default_alpha(cfg.optimizer.accel_beta));
    cfg.optimizer.weight_decay = number_or(o, "weight_decay", cfg.optimizer.weight_decay);
  }
  try {
    cfg.optimizer.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("bench.optimizer", e.what());
  }
  return cfg;
}

BenchReport bench_overhead(const BenchConfig& cfg) {
  cfg.optimizer.validate();
  std::mt19937_64 rng(cfg.seed);
  Matrix w0 = random_normal(cfg.rows, cfg.cols, rng);
  w0 *= 0.02;
  const Matrix x = random_normal(cfg.cols, cfg.batch, rng);
  const Matrix y = random_normal(cfg.rows, cfg.batch, rng);
  const Matrix xt = transpose(x);
  const double inv_batch = 1.0 / static_cast<double>(cfg.batch);

  struct Arm {
    std::string name;
    OptimizerKind kind;
    ParamGroup group;
    std::vector<double> inner;
    std::vector<double> iter;
  };
  std::vector<Arm> arms;
  arms.push_back({"muon", OptimizerKind::muon, ParamGroup("w", w0, ParamKind::matrix), {}, {}});
  arms.push_back({"muon_control", OptimizerKind::muon, ParamGroup("w", w0, ParamKind::matrix), {}, {}});
  arms.push_back({"mona", OptimizerKind::mona, ParamGroup("w", w0, ParamKind::matrix), {}, {}});

  const std::uint64_t total = cfg.warmup + cfg.steps;
  for (std::uint64_t k = 0; k < total; ++k) {
    // Rotate the arm order so no arm always runs first after the others.
    for (std::size_t j = 0; j < arms.size(); ++j) {
      Arm& arm = arms[(k + j) % arms.size()];
      const auto start = Clock::now();
      Matrix resid = matmul(arm.group.weights, x);
      resid -= y;
      Matrix grad = matmul(resid, xt);
      grad *= inv_batch;
      const StepTrace t = arm.kind == OptimizerKind::mona
                              ? mona_step(arm.group, grad, cfg.optimizer)
                              : muon_step(arm.group, grad, cfg.optimizer);
      const auto stop = Clock::now();
      if (k >= cfg.warmup) {
        arm.inner.push_back(static_cast<double>(t.inner_ns));
        arm.iter.push_back(
            static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(stop - start).count()));
      }
    }
  }

  BenchReport r;
  r.steps = cfg.steps;
  auto fill = [](BenchArm& out, const Arm& a) {
    out.name = a.name;
    out.median_inner_ns = median(a.inner);
    out.median_iter_ns = median(a.iter);
  };
  fill(r.muon, arms[0]);
  fill(r.muon_control, arms[1]);
  fill(r.mona, arms[2]);
  // Per-round ratios cancel slow drift in clock speed that would otherwise
  // leak into a ratio of separate medians.
  auto paired = [](const std::vector<double>& num, const std::vector<double>& den) {
    std::vector<double> ratio(num.size());
    for (std::size_t i = 0; i < num.size(); ++i) ratio[i] = num[i] / den[i];
    return median(std::move(ratio)) - 1.0;
  };
  r.control_inner = paired(arms[1].inner, arms[0].inner);
  r.control_iter = paired(arms[1].iter, arms[0].iter);
  r.mona_inner = paired(arms[2].inner, arms[0].inner);
  r.mona_iter = paired(arms[2].iter, arms[0].iter);
  r.noise_band = std::max(0.01, std::abs(r.control_iter));
  r.inner_ok = r.mona_inner <= 0.05;
  r.iter_ok = std::abs(r.mona_iter) <= 2.0 * r.noise_band;
  return r;
}

std::string BenchReport::to_text() const {
  char buf[512];
  std::string s;
  for (const BenchArm* a : {&muon, &muon_control, &mona}) {
    std::snprintf(buf, sizeof buf, "%-13s inner %12.0f ns   iteration %12.0f ns\n", a->name.c_str(),
                  a->median_inner_ns, a->median_iter_ns);
    s += buf;
  }
  std::snprintf(buf, sizeof buf,
                "steps %llu\ncontrol (muon vs muon): inner %+.2f%%  iteration %+.2f%%  noise band %.2f%%\n"
                "mona vs muon: inner %+.2f%% (limit 5%%) %s\n"
                "mona vs muon: iteration %+.2f%% (limit %.2f%%) %s\n",
                static_cast<unsigned long long>(steps), 100.0 * control_inner, 100.0 * control_iter,
                100.0 * noise_band, 100.0 * mona_inner, inner_ok ? "ok" : "EXCEEDED", 100.0 * mona_iter,
                200.0 * noise_band, iter_ok ? "ok" : "EXCEEDED");
  s += buf;
  return s;
}

}  // namespace mona
