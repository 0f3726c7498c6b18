// SPDX-License-Identifier: Apache-2.0
#include "mona/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "mona/checkpoint.hpp"

namespace mona {

using json = nlohmann::ordered_json;

ConfigError::ConfigError(std::string field, const std::string& message)
    : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}

std::string_view to_string(TaskType t) {
  switch (t) {
    case TaskType::teacher_student: return "teacher_student";
    case TaskType::quadratic: return "quadratic";
    case TaskType::double_well: return "double_well";
  }
  return "?";
}

namespace {

// Field access with dotted-path error messages.
class Fields {
 public:
  Fields(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string at(std::string_view key) const {
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
  }

  const json* find(std::string_view key) {
    seen_.insert(std::string(key));
    auto it = obj_.find(std::string(key));
    return it == obj_.end() || it->is_null() ? nullptr : &*it;
  }

  double number(std::string_view key, double fallback) {
    const json* v = find(key);
    if (v == nullptr) return fallback;
    if (!v->is_number()) throw ConfigError(at(key), "expected a number");
    return v->get<double>();
  }

  std::uint64_t count(std::string_view key, std::uint64_t fallback) {
    const json* v = find(key);
    if (v == nullptr) return fallback;
    if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<std::int64_t>() >= 0)) {
      throw ConfigError(at(key), "expected a non-negative integer");
    }
    return v->get<std::uint64_t>();
  }

  bool flag(std::string_view key, bool fallback) {
    const json* v = find(key);
    if (v == nullptr) return fallback;
    if (!v->is_boolean()) throw ConfigError(at(key), "expected true or false");
    return v->get<bool>();
  }

  std::string text(std::string_view key, std::string fallback) {
    const json* v = find(key);
    if (v == nullptr) return fallback;
    if (!v->is_string()) throw ConfigError(at(key), "expected a string");
    return v->get<std::string>();
  }

  std::vector<double> numbers(std::string_view key, std::vector<double> fallback) {
    const json* v = find(key);
    if (v == nullptr) return fallback;
    if (!v->is_array()) throw ConfigError(at(key), "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      const json& e = (*v)[i];
      if (!e.is_number()) throw ConfigError(at(key) + "[" + std::to_string(i) + "]", "expected a number");
      out.push_back(e.get<double>());
    }
    return out;
  }

  std::vector<std::uint64_t> counts(std::string_view key, std::vector<std::uint64_t> fallback) {
    const json* v = find(key);
    if (v == nullptr) return fallback;
    if (!v->is_array()) throw ConfigError(at(key), "expected an array of integers");
    std::vector<std::uint64_t> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      const json& e = (*v)[i];
      if (!e.is_number_unsigned() && !(e.is_number_integer() && e.get<std::int64_t>() >= 0)) {
        throw ConfigError(at(key) + "[" + std::to_string(i) + "]", "expected a non-negative integer");
      }
      out.push_back(e.get<std::uint64_t>());
    }
    return out;
  }

  /// Rejects keys that were never looked up, which catches typos.
  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(at(it.key()), "unknown field");
    }
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename F>
auto rethrow_as_field(const std::string& field, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(field, e.what());
  }
}

NsConfig parse_ns(Fields& parent, std::string_view key) {
  NsConfig ns;
  const json* v = parent.find(key);
  if (v == nullptr) return ns;
  Fields f(*v, parent.at(key));
  ns.steps = static_cast<int>(f.count("steps", static_cast<std::uint64_t>(ns.steps)));
  ns.coeff_a = f.number("coeff_a", ns.coeff_a);
  ns.coeff_b = f.number("coeff_b", ns.coeff_b);
  ns.coeff_c = f.number("coeff_c", ns.coeff_c);
  ns.epsilon = f.number("epsilon", ns.epsilon);
  f.finish();
  return ns;
}

// Fields shared by optimizer blocks and the bench block.
OptimizerConfig parse_optimizer_config(Fields& f, std::optional<Precision> default_precision) {
  OptimizerConfig c;
  c.learning_rate = f.number("learning_rate", c.learning_rate);
  c.momentum = f.number("momentum", c.momentum);
  c.accel_beta = f.number("accel_beta", c.accel_beta);
  if (const json* a = f.find("accel_alpha"); a != nullptr && !(a->is_string() && *a == "default")) {
    if (!a->is_number()) throw ConfigError(f.at("accel_alpha"), "expected a number or \"default\"");
    c.accel_alpha = a->get<double>();
  } else {
    c.accel_alpha = rethrow_as_field(f.at("accel_beta"), [&] { return default_alpha(c.accel_beta); });
  }
  c.weight_decay = f.number("weight_decay", c.weight_decay);
  c.ns = parse_ns(f, "ns");
  if (const json* g = f.find("gamma"); g != nullptr) {
    if (g->is_string() && *g == "muon_rms_match") {
      c.gamma = GammaRule::muon_rms_match();
    } else if (g->is_number()) {
      c.gamma = GammaRule::fixed(g->get<double>());
    } else {
      throw ConfigError(f.at("gamma"), "expected \"muon_rms_match\" or a number");
    }
  }
  const std::string prec = f.text("precision", "");
  if (!prec.empty()) {
    c.precision = rethrow_as_field(f.at("precision"), [&] { return parse_precision(prec); });
  } else if (default_precision) {
    c.precision = *default_precision;
  }
  return c;
}

OptimizerSpec parse_optimizer(const json& j, const std::string& path,
                              std::optional<Precision> default_precision) {
  Fields f(j, path);
  OptimizerSpec spec;
  const std::string type = f.text("type", "");
  if (type.empty()) throw ConfigError(f.at("type"), "missing optimizer type");
  spec.kind = rethrow_as_field(f.at("type"), [&] { return parse_optimizer_kind(type); });
  spec.name = f.text("name", type);
  std::optional<Precision> prec = default_precision;
  if (spec.kind == OptimizerKind::mona_lite && !prec) prec = Precision::bf16_streaming;
  if (spec.kind != OptimizerKind::mona_lite && prec && *prec != Precision::fp32_buffered) {
    // Streaming layouts only exist for the Lite variant.
    prec = Precision::fp32_buffered;
  }
  spec.config = parse_optimizer_config(f, prec);
  if (const json* a = f.find("adam"); a != nullptr) {
    Fields af(*a, f.at("adam"));
    spec.adam.beta1 = af.number("beta1", spec.adam.beta1);
    spec.adam.beta2 = af.number("beta2", spec.adam.beta2);
    spec.adam.eps = af.number("eps", spec.adam.eps);
    spec.adam.weight_decay = af.number("weight_decay", spec.adam.weight_decay);
    af.finish();
  }
  spec.fallback_lr = f.number("fallback_lr", 0.0);
  f.finish();
  rethrow_as_field(path, [&] {
    spec.validate();
    return 0;
  });
  return spec;
}

TaskConfig parse_task(const json& j, const std::string& path) {
  Fields f(j, path);
  TaskConfig t;
  const std::string type = f.text("type", "teacher_student");
  if (type == "teacher_student") {
    t.type = TaskType::teacher_student;
    TeacherStudentSpec& s = t.teacher_student;
    std::vector<std::uint64_t> dims(s.layer_dims.begin(), s.layer_dims.end());
    dims = f.counts("layer_dims", dims);
    s.layer_dims.assign(dims.begin(), dims.end());
    const std::string act = f.text("activation", std::string(to_string(s.activation)));
    s.activation = rethrow_as_field(f.at("activation"), [&] { return parse_activation(act); });
    s.teacher_scale = f.number("teacher_scale", s.teacher_scale);
    s.student_scale = f.number("student_scale", s.student_scale);
    s.batch_size = f.count("batch_size", s.batch_size);
    s.eval_size = f.count("eval_size", s.eval_size);
    rethrow_as_field(path, [&] {
      s.validate();
      return 0;
    });
  } else if (type == "quadratic") {
    t.type = TaskType::quadratic;
    t.rows = f.count("rows", t.rows);
    t.cols = f.count("cols", t.cols);
    t.eigs = f.numbers("eigs", t.eigs);
    t.rotated = f.flag("rotated", t.rotated);
    t.basis_seed = f.count("basis_seed", t.basis_seed);
    t.init = f.numbers("init", {});
    t.noise_sigma = f.number("noise_sigma", t.noise_sigma);
    t.clip_bound = f.number("clip_bound", t.clip_bound);
    if (t.rows == 0 || t.cols == 0) throw ConfigError(f.at("rows"), "rows and cols must be positive");
    if (t.eigs.size() != t.rows * t.cols) {
      throw ConfigError(f.at("eigs"), "needs rows * cols = " + std::to_string(t.rows * t.cols) + " entries");
    }
    for (double e : t.eigs) {
      if (!(e > 0.0)) throw ConfigError(f.at("eigs"), "eigenvalues must be positive");
    }
  } else if (type == "double_well") {
    t.type = TaskType::double_well;
    t.rows = 1;
    t.cols = 2;
    const std::string start = f.text("start", "sharp");
    if (start == "sharp") {
      t.start = EscapeStart::sharp;
    } else if (start == "flat") {
      t.start = EscapeStart::flat;
    } else {
      throw ConfigError(f.at("start"), "expected \"sharp\" or \"flat\"");
    }
    t.init = f.numbers("init", {});
    t.noise_sigma = f.number("noise_sigma", 1.5);
    t.clip_bound = f.number("clip_bound", 20.0);
  } else {
    throw ConfigError(f.at("type"), "unknown task type '" + type +
                                        "' (expected teacher_student, quadratic or double_well)");
  }
  if (t.type != TaskType::teacher_student) {
    if (!t.init.empty() && t.init.size() != t.rows * t.cols) {
      throw ConfigError(f.at("init"), "needs " + std::to_string(t.rows * t.cols) + " entries");
    }
    if (!(t.noise_sigma >= 0.0)) throw ConfigError(f.at("noise_sigma"), "must be >= 0");
    if (!(t.clip_bound > 0.0)) throw ConfigError(f.at("clip_bound"), "must be > 0");
  }
  f.finish();
  return t;
}

bool safe_name(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '-' || c == '.';
  });
}

json optimizer_to_json(const OptimizerSpec& s) {
  json j;
  j["name"] = s.name;
  j["type"] = std::string(to_string(s.kind));
  j["learning_rate"] = s.config.learning_rate;
  j["momentum"] = s.config.momentum;
  j["accel_beta"] = s.config.accel_beta;
  j["accel_alpha"] = s.config.accel_alpha;
  j["weight_decay"] = s.config.weight_decay;
  j["ns"] = {{"steps", s.config.ns.steps},
             {"coeff_a", s.config.ns.coeff_a},
             {"coeff_b", s.config.ns.coeff_b},
             {"coeff_c", s.config.ns.coeff_c},
             {"epsilon", s.config.ns.epsilon}};
  if (s.config.gamma.kind == GammaRule::Kind::fixed) {
    j["gamma"] = s.config.gamma.value;
  } else {
    j["gamma"] = "muon_rms_match";
  }
  j["precision"] = std::string(to_string(s.config.precision));
  j["adam"] = {{"beta1", s.adam.beta1},
               {"beta2", s.adam.beta2},
               {"eps", s.adam.eps},
               {"weight_decay", s.adam.weight_decay}};
  j["fallback_lr"] = s.vector_lr();
  return j;
}

Matrix task_init(const TaskConfig& t) {
  if (!t.init.empty()) return Matrix(t.rows, t.cols, t.init);
  if (t.type == TaskType::double_well) {
    const DoubleWellLandscape land = DoubleWellLandscape::standard();
    return t.start == EscapeStart::sharp ? land.sharp().center : land.flat().center;
  }
  return Matrix(t.rows, t.cols, 1.0);
}

std::unique_ptr<Landscape> make_landscape(const TaskConfig& t) {
  if (t.type == TaskType::double_well) {
    return std::make_unique<DoubleWellLandscape>(DoubleWellLandscape::standard());
  }
  Matrix target(t.rows, t.cols);
  if (t.rotated) {
    std::mt19937_64 rng(t.basis_seed);
    return std::make_unique<QuadraticLandscape>(QuadraticLandscape::rotated(target, t.eigs, rng));
  }
  return std::make_unique<QuadraticLandscape>(QuadraticLandscape::diagonal(target, t.eigs));
}

TrainResult run_landscape_cell(const ExperimentConfig& cfg, const OptimizerSpec& opt,
                               std::uint64_t seed) {
  const std::unique_ptr<Landscape> land = make_landscape(cfg.task);
  const StochasticGradientOracle oracle(*land, cfg.task.noise_sigma, cfg.task.clip_bound, seed);
  LemmaMonitor monitor(lemma_settings_for(
      opt.kind == OptimizerKind::muon ? StepRoute::muon
      : opt.kind == OptimizerKind::mona ? StepRoute::mona
                                        : StepRoute::mona_lite,
      opt.config));
  TrainResult result;
  result.records.reserve(cfg.steps);
  try {
    LandscapeRun run = run_on_landscape(
        oracle, opt.kind, opt.config, task_init(cfg.task), cfg.steps, [&](const LandscapeStep& s) {
          RunRecord r;
          r.step = s.step;
          r.train_loss = s.loss;
          r.eval_loss = (s.step % cfg.eval_every == 0 || s.step == cfg.steps)
                            ? s.loss
                            : std::numeric_limits<double>::quiet_NaN();
          r.grad_norm = s.trace.grad_norm;
          r.diff_norm = s.trace.diff_norm;
          r.accel_norm = s.trace.accel_norm;
          r.accel_grad_norm = s.trace.accel_grad_norm;
          r.momentum_norm = s.trace.momentum_norm;
          r.ortho_norm = s.trace.ortho_norm;
          r.update_norm = s.trace.update_norm;
          r.ns_degenerate = s.trace.ns_degenerate ? 1 : 0;
          r.lemma_violations =
              static_cast<std::uint32_t>(monitor.observe(norm_sample(s.step, s.trace)).size());
          r.vector_fallback = true;  // no vector parameters, so vacuously true
          r.inner_ns = s.trace.inner_ns;
          r.iter_ns = s.trace.inner_ns;
          result.records.push_back(r);
        });
    result.final_eval_loss = run.final_loss;
    result.params.push_back(std::move(run.group));
    if (!std::isfinite(run.final_loss)) {
      result.status = RunStatus::diverged;
      result.message = "non-finite final loss";
    }
  } catch (const StepRejected& e) {
    result.status = RunStatus::diverged;
    result.message = e.what();
    result.final_eval_loss = std::numeric_limits<double>::infinity();
  }
  result.lemma_violations = monitor.violation_count();
  return result;
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

std::string cell_stem(const std::string& optimizer, std::uint64_t seed) {
  return optimizer + "_seed" + std::to_string(seed);
}

}  // namespace

ExperimentConfig parse_experiment_config(std::string_view text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("not valid JSON: ") + e.what());
  }
  Fields f(root, "");
  ExperimentConfig cfg;
  cfg.name = f.text("name", cfg.name);
  if (!safe_name(cfg.name)) throw ConfigError("name", "use letters, digits, '_', '-' or '.'");

  std::optional<Precision> precision;
  const std::string prec = f.text("precision", "");
  if (!prec.empty()) precision = rethrow_as_field("precision", [&] { return parse_precision(prec); });

  if (const json* t = f.find("task"); t != nullptr) cfg.task = parse_task(*t, "task");

  const json* opts = f.find("optimizers");
  if (opts == nullptr || !opts->is_array() || opts->empty()) {
    throw ConfigError("optimizers", "expected a non-empty array of optimizer blocks");
  }
  std::set<std::string> names;
  for (std::size_t i = 0; i < opts->size(); ++i) {
    const std::string path = "optimizers[" + std::to_string(i) + "]";
    OptimizerSpec spec = parse_optimizer((*opts)[i], path, precision);
    if (!safe_name(spec.name)) throw ConfigError(path + ".name", "use letters, digits, '_', '-' or '.'");
    if (!names.insert(spec.name).second) throw ConfigError(path + ".name", "duplicate optimizer name '" + spec.name + "'");
    if (cfg.task.type != TaskType::teacher_student && spec.kind != OptimizerKind::muon &&
        spec.kind != OptimizerKind::mona && spec.kind != OptimizerKind::mona_lite) {
      throw ConfigError(path + ".type", "landscape tasks support muon, mona and mona_lite only");
    }
    cfg.optimizers.push_back(std::move(spec));
  }

  cfg.steps = f.count("steps", cfg.steps);
  if (cfg.steps == 0) throw ConfigError("steps", "must be positive");
  cfg.seeds = f.counts("seeds", cfg.seeds);
  if (cfg.seeds.empty()) throw ConfigError("seeds", "needs at least one seed");
  if (std::set<std::uint64_t>(cfg.seeds.begin(), cfg.seeds.end()).size() != cfg.seeds.size()) {
    throw ConfigError("seeds", "seeds must be distinct");
  }
  cfg.eval_every = f.count("eval_every", cfg.eval_every);
  if (cfg.eval_every == 0) throw ConfigError("eval_every", "must be positive");
  cfg.output_dir = f.text("output_dir", "");
  cfg.write_checkpoints = f.flag("write_checkpoints", cfg.write_checkpoints);
  cfg.record_timings = f.flag("record_timings", cfg.record_timings);
  cfg.threads = static_cast<unsigned>(f.count("threads", cfg.threads));
  f.finish();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path, std::string* raw_text) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  if (raw_text != nullptr) *raw_text = text;
  return parse_experiment_config(text);
}

std::string resolved_config_json(const ExperimentConfig& cfg) {
  json j;
  j["name"] = cfg.name;
  json t;
  t["type"] = std::string(to_string(cfg.task.type));
  if (cfg.task.type == TaskType::teacher_student) {
    const auto& s = cfg.task.teacher_student;
    t["layer_dims"] = s.layer_dims;
    t["activation"] = std::string(to_string(s.activation));
    t["teacher_scale"] = s.teacher_scale;
    t["student_scale"] = s.student_scale;
    t["batch_size"] = s.batch_size;
    t["eval_size"] = s.eval_size;
  } else {
    if (cfg.task.type == TaskType::quadratic) {
      t["rows"] = cfg.task.rows;
      t["cols"] = cfg.task.cols;
      t["eigs"] = cfg.task.eigs;
      t["rotated"] = cfg.task.rotated;
      t["basis_seed"] = cfg.task.basis_seed;
    } else {
      t["start"] = cfg.task.start == EscapeStart::sharp ? "sharp" : "flat";
    }
    const Matrix init = task_init(cfg.task);
    t["init"] = std::vector<double>(init.values().begin(), init.values().end());
    t["noise_sigma"] = cfg.task.noise_sigma;
    t["clip_bound"] = cfg.task.clip_bound;
  }
  j["task"] = std::move(t);
  j["optimizers"] = json::array();
  for (const auto& o : cfg.optimizers) j["optimizers"].push_back(optimizer_to_json(o));
  j["steps"] = cfg.steps;
  j["seeds"] = cfg.seeds;
  j["eval_every"] = cfg.eval_every;
  j["output_dir"] = cfg.output_dir.empty() ? "runs/" + cfg.name : cfg.output_dir;
  j["write_checkpoints"] = cfg.write_checkpoints;
  j["record_timings"] = cfg.record_timings;
  j["threads"] = cfg.threads;
  return j.dump(2) + "\n";
}

std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg) {
  std::filesystem::path dir = cfg.output_dir.empty() ? std::filesystem::path("runs") / cfg.name
                                                     : std::filesystem::path(cfg.output_dir);
  if (dir.is_relative()) {
    if (const char* root = std::getenv("MONA_OUTPUT_ROOT"); root != nullptr && *root != '\0') {
      dir = std::filesystem::path(root) / dir;
    }
  }
  return dir;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string run_csv_header() {
  return "step,train_loss,eval_loss,grad_norm,diff_norm,accel_norm,accel_grad_norm,momentum_norm,"
         "ortho_norm,update_norm,ns_degenerate,lemma_violations,vector_fallback\n";
}

std::string run_csv_row(const RunRecord& r) {
  std::string s = std::to_string(r.step);
  for (double v : {r.train_loss, r.eval_loss, r.grad_norm, r.diff_norm, r.accel_norm,
                   r.accel_grad_norm, r.momentum_norm, r.ortho_norm, r.update_norm}) {
    s += ',';
    s += format_number(v);
  }
  s += ',' + std::to_string(r.ns_degenerate);
  s += ',' + std::to_string(r.lemma_violations);
  s += r.vector_fallback ? ",1\n" : ",0\n";
  return s;
}

TrainResult run_cell(const ExperimentConfig& cfg, const OptimizerSpec& opt, std::uint64_t seed) {
  if (cfg.task.type != TaskType::teacher_student) return run_landscape_cell(cfg, opt, seed);
  const TeacherStudentTask task(cfg.task.teacher_student, seed);
  TrainOptions options;
  options.steps = cfg.steps;
  options.eval_every = cfg.eval_every;
  return train(task, opt, options);
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, std::string_view raw_config_text) {
  ExperimentResult result;
  result.output_dir = resolve_output_dir(cfg);
  std::error_code ec;
  std::filesystem::create_directories(result.output_dir, ec);
  if (ec) throw IoError("cannot create '" + result.output_dir.string() + "': " + ec.message());

  const std::string resolved = resolved_config_json(cfg);
  write_file(result.output_dir / "config.json", raw_config_text);
  write_file(result.output_dir / "config.resolved.json", resolved);

  struct Cell {
    const OptimizerSpec* opt;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (const auto& o : cfg.optimizers) {
    for (std::uint64_t s : cfg.seeds) cells.push_back({&o, s});
  }
  result.cells.resize(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());

  // Each cell owns its output files; only the final aggregation is shared.
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        const Cell& c = cells[i];
        const TrainResult tr = run_cell(cfg, *c.opt, c.seed);
        const std::string stem = cell_stem(c.opt->name, c.seed);
        CellResult& out = result.cells[i];
        out.optimizer = c.opt->name;
        out.seed = c.seed;
        out.status = tr.status;
        out.message = tr.message;
        out.final_eval_loss = tr.final_eval_loss;
        out.lemma_violations = tr.lemma_violations;
        out.fallback_ok = std::all_of(tr.records.begin(), tr.records.end(),
                                      [](const RunRecord& r) { return r.vector_fallback; });
        out.csv_path = result.output_dir / (stem + ".csv");

        std::string csv = run_csv_header();
        for (const auto& r : tr.records) csv += run_csv_row(r);
        write_file(out.csv_path, csv);
        if (cfg.record_timings) {
          std::string timing = "step,inner_ns,iter_ns\n";
          for (const auto& r : tr.records) {
            timing += std::to_string(r.step) + "," + std::to_string(r.inner_ns) + "," +
                      std::to_string(r.iter_ns) + "\n";
          }
          write_file(result.output_dir / (stem + ".timing.csv"), timing);
        }
        if (cfg.write_checkpoints) {
          try {
            save_checkpoint(result.output_dir / (stem + ".ckpt"), resolved, tr.params);
          } catch (const CheckpointError& e) {
            throw IoError(e.what());
          }
        }
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  unsigned nthreads = cfg.threads != 0 ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  nthreads = static_cast<unsigned>(std::min<std::size_t>(nthreads, cells.size()));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < nthreads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  // Summary and verification, in config order.
  std::string summary =
      "optimizer,type,runs,completed,diverged,mean_final_eval_loss,std_final_eval_loss,lemma_violations\n";
  std::map<OptimizerKind, double> first_mean_by_kind;
  for (const auto& o : cfg.optimizers) {
    std::vector<double> finals;
    std::size_t runs = 0;
    std::size_t violations = 0;
    bool fallback_ok = true;
    for (const auto& c : result.cells) {
      if (c.optimizer != o.name) continue;
      ++runs;
      violations += c.lemma_violations;
      fallback_ok = fallback_ok && c.fallback_ok;
      if (c.status == RunStatus::completed) finals.push_back(c.final_eval_loss);
    }
    double mean = std::numeric_limits<double>::quiet_NaN();
    double sd = std::numeric_limits<double>::quiet_NaN();
    if (!finals.empty()) {
      mean = 0.0;
      for (double v : finals) mean += v;
      mean /= static_cast<double>(finals.size());
      sd = 0.0;
      for (double v : finals) sd += (v - mean) * (v - mean);
      sd = finals.size() > 1 ? std::sqrt(sd / static_cast<double>(finals.size() - 1)) : 0.0;
    }
    summary += o.name + "," + std::string(to_string(o.kind)) + "," + std::to_string(runs) + "," +
               std::to_string(finals.size()) + "," + std::to_string(runs - finals.size()) + "," +
               format_number(mean) + "," + format_number(sd) + "," + std::to_string(violations) + "\n";
    first_mean_by_kind.try_emplace(o.kind, mean);

    CheckResult lemma{"lemma_bounds/" + o.name,
                      violations == 0 ? CheckStatus::pass : CheckStatus::fail,
                      std::to_string(violations) + " violations over " + std::to_string(runs) + " runs",
                      {{"violations", static_cast<double>(violations)}}};
    result.report.add(std::move(lemma));
    if (cfg.task.type == TaskType::teacher_student &&
        (o.kind == OptimizerKind::muon || o.kind == OptimizerKind::mona ||
         o.kind == OptimizerKind::mona_lite)) {
      result.report.add(CheckResult{"vector_fallback/" + o.name,
                                    fallback_ok ? CheckStatus::pass : CheckStatus::fail,
                                    fallback_ok ? "every bias step went through AdamW"
                                                : "a vector parameter bypassed the AdamW fallback",
                                    {}});
    }
    if (runs != finals.size()) {
      result.report.add(CheckResult{"diverged/" + o.name, CheckStatus::skipped,
                                    std::to_string(runs - finals.size()) + " runs diverged",
                                    {{"diverged", static_cast<double>(runs - finals.size())}}});
    }
  }
  write_file(result.output_dir / "summary.csv", summary);

  auto ordering = [&](OptimizerKind lo, OptimizerKind hi, bool gating) {
    auto a = first_mean_by_kind.find(lo);
    auto b = first_mean_by_kind.find(hi);
    if (a == first_mean_by_kind.end() || b == first_mean_by_kind.end()) return;
    const bool holds = a->second <= b->second;
    CheckResult r;
    r.name = "ordering/" + std::string(to_string(lo)) + "_le_" + std::string(to_string(hi));
    r.status = holds || !gating ? CheckStatus::pass : CheckStatus::fail;
    r.detail = std::string(holds ? "holds" : "does not hold") + (gating ? "" : " (reported, not gating)");
    r.numbers = {{std::string(to_string(lo)), a->second}, {std::string(to_string(hi)), b->second}};
    result.report.add(std::move(r));
  };
  if (cfg.task.type == TaskType::teacher_student) {
    ordering(OptimizerKind::mona, OptimizerKind::muon, true);
    ordering(OptimizerKind::adamw_acc, OptimizerKind::adamw, true);
    ordering(OptimizerKind::muon, OptimizerKind::adamw_acc, false);
  }
  for (const auto& o : cfg.optimizers) {
    if (o.kind != OptimizerKind::muon && o.kind != OptimizerKind::adamw && o.config.accel_alpha > 0.0) {
      result.report.add(CheckResult{"alpha_regime/" + o.name, CheckStatus::skipped,
                                    "accel_alpha > 0 lies outside the analyzed alpha < 0 regime",
                                    {{"accel_alpha", o.config.accel_alpha}}});
    }
  }
  write_file(result.output_dir / "report.json", result.report.to_json());
  write_file(result.output_dir / "report.txt", result.report.to_text());
  return result;
}

}  // namespace mona
