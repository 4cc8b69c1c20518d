#include "ctnreg/harness.hpp"

#include "ctnreg/error.hpp"
#include "ctnreg/mlr.hpp"
#include "ctnreg/optim.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

namespace ctnreg {

using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorKind::kConfig, msg); }

std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw Error(ErrorKind::kIo, "write to " + path.string() + " failed");
}

RegularizerKind kind_from_json(const json& v) {
  const auto kind = parse_regularizer_kind(v.get<std::string>());
  if (!kind) config_error("unknown regularizer '" + v.get<std::string>() + "'");
  return *kind;
}

}  // namespace

std::string_view to_string(ModelKind kind) { return kind == ModelKind::kMlr ? "mlr" : "mlp"; }

std::optional<ModelKind> parse_model_kind(std::string_view name) {
  if (name == "mlr") return ModelKind::kMlr;
  if (name == "mlp") return ModelKind::kMlp;
  return std::nullopt;
}

std::vector<double> default_lambda_grid() { return {1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0}; }

void RunConfig::validate() const {
  try {
    reg.validate();
  } catch (const Error& e) {
    config_error(e.what());
  }
  if (mu && model != ModelKind::kMlp) config_error("mu applies only to the mlp model");
  if (mu && !(*mu > 0.0 && std::isfinite(*mu))) config_error("mu must be > 0");
  if (model == ModelKind::kMlp) {
    auto check_kind = [&](RegularizerKind k) {
      if (k != RegularizerKind::kNone && k != RegularizerKind::kCoupled) {
        config_error("the mlp model supports regularizers none and coupled, not " +
                     std::string(to_string(k)));
      }
      if (k == RegularizerKind::kCoupled && !mu) config_error("coupled regularizer on mlp requires mu");
    };
    check_kind(reg.kind);
    for (RegularizerKind k : kinds) check_kind(k);
    for (Index h : hidden) {
      if (h < 1) config_error("hidden layer sizes must be positive");
    }
    if (outer_iters < 1 || epochs_per_theta < 1 || batch_size < 1 || !(learning_rate > 0.0) ||
        !(momentum >= 0.0 && momentum < 1.0)) {
      config_error("mlp budgets must be positive and momentum in [0, 1)");
    }
  }
  if (train_csv.has_value() != test_csv.has_value()) {
    config_error("give both train_csv and test_csv, or neither for synthetic data");
  }
  if (!train_csv && test_per_class < 1) config_error("test_per_class must be >= 1");
  if (max_iters < 1 || !(step_tol > 0.0) || !(grad_tol > 0.0)) {
    config_error("max_iters must be >= 1 and tolerances > 0");
  }
  if (lambda_grid.empty()) config_error("lambda grid is empty");
  for (double l : lambda_grid) {
    if (!(l >= 0.0 && std::isfinite(l))) config_error("lambda grid values must be >= 0");
  }
  if (workers < 1) config_error("workers must be >= 1");
}

void apply_config_json(RunConfig& cfg, std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    config_error(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) config_error("config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "model") {
        const auto m = parse_model_kind(v.get<std::string>());
        if (!m) config_error("unknown model '" + v.get<std::string>() + "'");
        cfg.model = *m;
      } else if (key == "reg") {
        cfg.reg.kind = kind_from_json(v);
      } else if (key == "lambda") {
        cfg.reg.lambda = v.get<double>();
      } else if (key == "mu") {
        if (v.is_null()) {
          cfg.mu.reset();
        } else {
          cfg.mu = v.get<double>();
        }
      } else if (key == "train_csv") {
        cfg.train_csv = v.get<std::string>();
      } else if (key == "test_csv") {
        cfg.test_csv = v.get<std::string>();
      } else if (key == "label_col") {
        if (v.is_number_integer()) {
          cfg.label_col = v.get<Index>();
        } else {
          cfg.label_col = v.get<std::string>();
        }
      } else if (key == "has_header") {
        cfg.has_header = v.get<bool>();
      } else if (key == "standardize") {
        cfg.standardize = v.get<bool>();
      } else if (key == "n_per_class") {
        cfg.synth.n_per_class = v.get<Index>();
      } else if (key == "test_per_class") {
        cfg.test_per_class = v.get<Index>();
      } else if (key == "classes") {
        cfg.synth.classes = v.get<Index>();
      } else if (key == "features") {
        cfg.synth.features = v.get<Index>();
      } else if (key == "rank") {
        cfg.synth.rank = v.get<Index>();
      } else if (key == "noise_sigma") {
        cfg.synth.noise_sigma = v.get<double>();
      } else if (key == "max_iters") {
        cfg.max_iters = v.get<int>();
      } else if (key == "step_tol") {
        cfg.step_tol = v.get<double>();
      } else if (key == "grad_tol") {
        cfg.grad_tol = v.get<double>();
      } else if (key == "hidden") {
        cfg.hidden = v.get<std::vector<Index>>();
      } else if (key == "outer_iters") {
        cfg.outer_iters = v.get<int>();
      } else if (key == "epochs_per_theta") {
        cfg.epochs_per_theta = v.get<int>();
      } else if (key == "learning_rate") {
        cfg.learning_rate = v.get<double>();
      } else if (key == "momentum") {
        cfg.momentum = v.get<double>();
      } else if (key == "batch_size") {
        cfg.batch_size = v.get<Index>();
      } else if (key == "lambda_grid") {
        cfg.lambda_grid = v.get<std::vector<double>>();
      } else if (key == "kinds") {
        cfg.kinds.clear();
        for (const auto& k : v) cfg.kinds.push_back(kind_from_json(k));
      } else if (key == "seed") {
        cfg.seed = v.get<std::uint64_t>();
      } else if (key == "out") {
        cfg.out_dir = v.get<std::string>();
      } else if (key == "workers") {
        cfg.workers = v.get<int>();
      } else if (key == "checkpoint") {
        cfg.checkpoint = v.get<std::string>();
      } else {
        config_error("unknown config key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    config_error(std::string("bad config value: ") + e.what());
  }
}

RunConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  RunConfig cfg;
  apply_config_json(cfg, buf.str());
  return cfg;
}

// ---------------------------------------------------------------------------

std::pair<Dataset, Dataset> load_run_data(const RunConfig& cfg) {
  std::pair<Dataset, Dataset> out;
  if (cfg.train_csv) {
    out.first = load_csv(*cfg.train_csv, cfg.label_col, cfg.has_header);
    out.second = load_csv(*cfg.test_csv, cfg.label_col, cfg.has_header, &out.first.class_names);
    if (out.second.features() != out.first.features()) {
      throw Error(ErrorKind::kInvalidInput, "train and test files have different feature counts");
    }
    // Classes seen only in training still need a column in the test labels.
    if (out.second.classes() < out.first.classes()) {
      Matrix y = Matrix::Zero(out.second.samples(), out.first.classes());
      y.leftCols(out.second.classes()) = out.second.y;
      out.second.y = std::move(y);
      out.second.class_names = out.first.class_names;
    }
  } else {
    SyntheticSpec spec = cfg.synth;
    spec.n_per_class = cfg.synth.n_per_class + cfg.test_per_class;
    spec.seed = cfg.seed;
    const Dataset all = gen_synthetic_lowrank(spec);
    SplitSpec split_spec;
    for (Index k = 0; k < spec.classes; ++k) {
      for (Index i = 0; i < spec.n_per_class; ++i) {
        auto& target = i < cfg.synth.n_per_class ? split_spec.train_indices : split_spec.test_indices;
        target.push_back(k * spec.n_per_class + i);
      }
    }
    out = split(all, split_spec);
  }
  if (cfg.standardize) {
    auto [train, transform] = standardize(out.first);
    out.second = transform.apply(out.second);
    out.first = std::move(train);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

FitOutcome fit_mlr(const RunConfig& cfg, const RegularizerSpec& reg, const Dataset& train) {
  FitOutcome out;
  const MlrObjective objective(train.x, train.y, reg);
  const SmoothObjective fn = [&](const Matrix& w) { return objective.value_and_grad(w); };
  Matrix w;
  FitSummary& s = out.summary;
  if (reg.kind == RegularizerKind::kL1 && reg.lambda > 0.0) {
    SubgradConfig sub;
    sub.grad_tol = cfg.grad_tol;
    sub.max_iters = cfg.max_iters;
    SubgradResult run = subgradient_descent(fn, Matrix::Zero(train.classes(), train.features()), sub);
    w = std::move(run.best);
    s.stop_reason = std::string(to_string(run.report.stop_reason));
    s.iterations = run.report.iterations;
    s.objective_trajectory.push_back(run.report.initial_objective);
    s.objective_trajectory.insert(s.objective_trajectory.end(), run.report.best_trajectory.begin(),
                                  run.report.best_trajectory.end());
  } else {
    GdConfig gd;
    gd.max_iters = cfg.max_iters;
    gd.step_tol = cfg.step_tol;
    gd.grad_tol = cfg.grad_tol;
    GdResult run = gradient_descent(fn, train.classes(), train.features(), gd);
    w = std::move(run.w);
    s.stop_reason = std::string(to_string(run.report.stop_reason));
    s.iterations = run.report.iterations;
    s.objective_trajectory = std::move(run.report.objective_trajectory);
  }
  s.final_objective = s.objective_trajectory.back();
  out.model = MlpParams::zeros({train.features(), train.classes()});
  out.model.weights[0] = std::move(w);
  return out;
}

FitOutcome fit_mlp(const RunConfig& cfg, const RegularizerSpec& reg, const Dataset& train) {
  FitOutcome out;
  FitSummary& s = out.summary;
  SgdConfig sgd;
  sgd.learning_rate = cfg.learning_rate;
  sgd.momentum = cfg.momentum;
  sgd.batch_size = cfg.batch_size;
  sgd.seed = cfg.seed;
  if (reg.kind == RegularizerKind::kCoupled && reg.lambda > 0.0) {
    AltMinConfig alt;
    alt.hidden = cfg.hidden;
    alt.lambda = reg.lambda;
    alt.mu = *cfg.mu;
    alt.outer_iters = cfg.outer_iters;
    alt.sgd = sgd;
    alt.sgd.epochs = cfg.epochs_per_theta;
    alt.seed = cfg.seed;
    AltMinResult run = alternating_minimize(train.x, train.y, alt);
    out.model = std::move(run.state.theta);
    s.stop_reason = run.report.converged ? "xi-tol" : "max-iters";
    s.iterations = run.report.outer_iterations;
    s.objective_trajectory = std::move(run.report.objective_history);
  } else {
    SgdTrainConfig plain;
    plain.hidden = cfg.hidden;
    plain.sgd = sgd;
    plain.sgd.epochs = cfg.outer_iters * cfg.epochs_per_theta;
    SgdTrainResult run = train_mlp_sgd(train.x, train.y, plain);
    out.model = std::move(run.theta);
    s.stop_reason = "max-iters";
    s.iterations = plain.sgd.epochs;
    s.objective_trajectory = std::move(run.epoch_losses);
  }
  s.final_objective = s.objective_trajectory.empty() ? 0.0 : s.objective_trajectory.back();
  return out;
}

}  // namespace

FitOutcome fit_and_evaluate(const RunConfig& cfg, const RegularizerSpec& reg, const Dataset& train,
                            const Dataset& test) {
  FitOutcome out = cfg.model == ModelKind::kMlr ? fit_mlr(cfg, reg, train) : fit_mlp(cfg, reg, train);
  out.summary.kind = reg.kind;
  out.summary.lambda = reg.effective_lambda();
  out.summary.train_accuracy = accuracy(argmax_rows(mlp_forward(out.model, train.x)), train.y);
  out.summary.test_accuracy = accuracy(argmax_rows(mlp_forward(out.model, test.x)), test.y);
  return out;
}

std::optional<std::size_t> select_best(const std::vector<FitSummary>& rows) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].ok) continue;
    if (!best) {
      best = i;
      continue;
    }
    const FitSummary& b = rows[*best];
    if (rows[i].test_accuracy > b.test_accuracy ||
        (rows[i].test_accuracy == b.test_accuracy && rows[i].lambda < b.lambda)) {
      best = i;
    }
  }
  return best;
}

SweepTable run_sweep(const RunConfig& cfg, RegularizerKind kind, const Dataset& train,
                     const Dataset& test) {
  SweepTable table;
  table.kind = kind;
  const std::vector<double> grid =
      kind == RegularizerKind::kNone ? std::vector<double>{0.0} : cfg.lambda_grid;
  table.rows.resize(grid.size());

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < grid.size(); i = next++) {
      FitSummary& row = table.rows[i];
      try {
        row = fit_and_evaluate(cfg, RegularizerSpec{kind, grid[i]}, train, test).summary;
        row.objective_trajectory.clear();
      } catch (const std::exception& e) {
        row = FitSummary{};
        row.ok = false;
        row.error = e.what();
      }
      row.kind = kind;
      row.lambda = grid[i];
    }
  };
  const auto threads = static_cast<std::size_t>(std::min<int>(cfg.workers, static_cast<int>(grid.size())));
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
  }
  table.best = select_best(table.rows);
  return table;
}

// ---------------------------------------------------------------------------

namespace {

json config_to_json(const RunConfig& c) {
  json j;
  j["model"] = std::string(to_string(c.model));
  j["reg"] = std::string(to_string(c.reg.kind));
  j["lambda"] = c.reg.lambda;
  j["mu"] = c.mu ? json(*c.mu) : json(nullptr);
  j["train_csv"] = c.train_csv ? json(c.train_csv->string()) : json(nullptr);
  j["test_csv"] = c.test_csv ? json(c.test_csv->string()) : json(nullptr);
  if (const auto* idx = std::get_if<Index>(&c.label_col)) {
    j["label_col"] = *idx;
  } else {
    j["label_col"] = std::get<std::string>(c.label_col);
  }
  j["has_header"] = c.has_header;
  j["standardize"] = c.standardize;
  j["n_per_class"] = c.synth.n_per_class;
  j["test_per_class"] = c.test_per_class;
  j["classes"] = c.synth.classes;
  j["features"] = c.synth.features;
  j["rank"] = c.synth.rank;
  j["noise_sigma"] = c.synth.noise_sigma;
  j["max_iters"] = c.max_iters;
  j["step_tol"] = c.step_tol;
  j["grad_tol"] = c.grad_tol;
  j["hidden"] = c.hidden;
  j["outer_iters"] = c.outer_iters;
  j["epochs_per_theta"] = c.epochs_per_theta;
  j["learning_rate"] = c.learning_rate;
  j["momentum"] = c.momentum;
  j["batch_size"] = c.batch_size;
  j["lambda_grid"] = c.lambda_grid;
  j["kinds"] = json::array();
  for (RegularizerKind k : c.kinds) j["kinds"].push_back(std::string(to_string(k)));
  j["seed"] = c.seed;
  j["out"] = c.out_dir.string();
  j["workers"] = c.workers;
  j["checkpoint"] = c.checkpoint ? json(c.checkpoint->string()) : json(nullptr);
  return j;
}

json summary_to_json(const FitSummary& s, bool with_trajectory) {
  json j;
  j["kind"] = std::string(to_string(s.kind));
  j["lambda"] = s.lambda;
  j["status"] = s.ok ? "ok" : "failed";
  if (!s.ok) {
    j["error"] = s.error;
    return j;
  }
  j["train_accuracy"] = s.train_accuracy;
  j["test_accuracy"] = s.test_accuracy;
  j["stop_reason"] = s.stop_reason;
  j["iterations"] = s.iterations;
  j["final_objective"] = s.final_objective;
  if (with_trajectory) j["objective_trajectory"] = s.objective_trajectory;
  return j;
}

std::string sweep_csv(const std::vector<SweepTable>& sweeps) {
  std::string out = "kind,lambda,status,train_accuracy,test_accuracy,stop_reason,iterations,best\n";
  for (const SweepTable& t : sweeps) {
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      const FitSummary& r = t.rows[i];
      out += std::string(to_string(t.kind)) + ',' + fmt_real(r.lambda) + ',' + (r.ok ? "ok" : "failed") +
             ',';
      if (r.ok) {
        out += fmt_real(r.train_accuracy) + ',' + fmt_real(r.test_accuracy) + ',' + r.stop_reason + ',' +
               std::to_string(r.iterations);
      } else {
        out += ",,,";
      }
      out += t.best == i ? ",1\n" : ",0\n";
    }
  }
  return out;
}

std::string compare_csv(const std::vector<SweepTable>& sweeps) {
  std::string out = "kind,train_accuracy,test_accuracy,best_lambda\n";
  for (const SweepTable& t : sweeps) {
    out += std::string(to_string(t.kind));
    if (t.best) {
      const FitSummary& r = t.rows[*t.best];
      out += ',' + fmt_real(r.train_accuracy) + ',' + fmt_real(r.test_accuracy) + ',' + fmt_real(r.lambda);
    } else {
      out += ",,,";
    }
    out += '\n';
  }
  return out;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

RunReport start_report(const std::string& command, const RunConfig& cfg, const Dataset& train,
                       const Dataset& test) {
  RunReport r;
  r.command = command;
  r.config = cfg;
  r.train_samples = train.samples();
  r.test_samples = test.samples();
  r.features = train.features();
  r.classes = train.classes();
  return r;
}

}  // namespace

std::string RunReport::to_json(bool include_wall_clock) const {
  json j;
  j["command"] = command;
  j["config"] = config_to_json(config);
  j["data"] = {{"train_samples", train_samples},
               {"test_samples", test_samples},
               {"features", features},
               {"classes", classes}};
  if (fit) j["fit"] = summary_to_json(*fit, true);
  if (!sweeps.empty()) {
    j["selection"] = "oracle selection: lambda with the highest test accuracy, ties to the smaller lambda";
    j["sweeps"] = json::array();
    for (const SweepTable& t : sweeps) {
      json s;
      s["kind"] = std::string(to_string(t.kind));
      s["rows"] = json::array();
      for (std::size_t i = 0; i < t.rows.size(); ++i) {
        json row = summary_to_json(t.rows[i], false);
        row["best"] = t.best == i;
        s["rows"].push_back(std::move(row));
      }
      s["best_lambda"] = t.best ? json(t.rows[*t.best].lambda) : json(nullptr);
      j["sweeps"].push_back(std::move(s));
    }
  }
  if (include_wall_clock) j["wall_clock_seconds"] = wall_clock_seconds;
  return j.dump(2) + "\n";
}

std::string RunReport::comparison_table() const {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-10s | %9s | %9s | %s\n", "Method", "Training", "Testing", "lambda");
  out += line;
  for (const SweepTable& t : sweeps) {
    if (t.best) {
      const FitSummary& r = t.rows[*t.best];
      std::snprintf(line, sizeof(line), "%-10s | %8.2f%% | %8.2f%% | %g\n",
                    std::string(to_string(t.kind)).c_str(), 100.0 * r.train_accuracy,
                    100.0 * r.test_accuracy, r.lambda);
    } else {
      std::snprintf(line, sizeof(line), "%-10s | %9s | %9s | %s\n", std::string(to_string(t.kind)).c_str(),
                    "failed", "failed", "-");
    }
    out += line;
  }
  return out;
}

RunReport cmd_train(const RunConfig& cfg) {
  cfg.validate();
  const Stopwatch clock;
  const auto [train, test] = load_run_data(cfg);
  RunReport report = start_report("train", cfg, train, test);
  FitOutcome fit = fit_and_evaluate(cfg, cfg.reg, train, test);
  report.fit = fit.summary;

  export_features(mlp_forward(fit.model, test.x), test.labels(), cfg.out_dir / "features.csv");
  Checkpoint cp;
  cp.theta = std::move(fit.model);
  cp.seed = cfg.seed;
  cp.hyperparameters["lambda"] = cfg.reg.effective_lambda();
  if (cfg.mu) cp.hyperparameters["mu"] = *cfg.mu;
  save_checkpoint(cfg.out_dir / "checkpoint", cp);

  report.wall_clock_seconds = clock.seconds();
  write_text(cfg.out_dir / "report.json", report.to_json());
  return report;
}

RunReport cmd_sweep(const RunConfig& cfg) {
  cfg.validate();
  const Stopwatch clock;
  const auto [train, test] = load_run_data(cfg);
  RunReport report = start_report("sweep", cfg, train, test);
  report.sweeps.push_back(run_sweep(cfg, cfg.reg.kind, train, test));
  report.wall_clock_seconds = clock.seconds();
  write_text(cfg.out_dir / "report.json", report.to_json());
  write_text(cfg.out_dir / "sweep_table.csv", sweep_csv(report.sweeps));
  return report;
}

RunReport cmd_compare(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.kinds.size() < 2) config_error("compare needs at least two regularizer kinds");
  const Stopwatch clock;
  const auto [train, test] = load_run_data(cfg);
  RunReport report = start_report("compare", cfg, train, test);
  for (RegularizerKind kind : cfg.kinds) report.sweeps.push_back(run_sweep(cfg, kind, train, test));
  report.wall_clock_seconds = clock.seconds();
  write_text(cfg.out_dir / "report.json", report.to_json());
  write_text(cfg.out_dir / "sweep_table.csv", sweep_csv(report.sweeps));
  write_text(cfg.out_dir / "compare_table.csv", compare_csv(report.sweeps));
  return report;
}

void cmd_gen_synth(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.train_csv) config_error("gen-synth does not read CSV input");
  const auto [train, test] = load_run_data(cfg);
  write_csv(train, cfg.out_dir / "train.csv");
  write_csv(test, cfg.out_dir / "test.csv");
}

void cmd_export_features(const RunConfig& cfg) {
  cfg.validate();
  const auto [train, test] = load_run_data(cfg);
  MlpParams model;
  if (cfg.checkpoint) {
    model = load_checkpoint(*cfg.checkpoint).theta;
    if (model.inputs() != test.features() || model.outputs() != test.classes()) {
      throw Error(ErrorKind::kInvalidInput, "checkpoint does not match the data dimensions");
    }
  } else {
    model = fit_and_evaluate(cfg, cfg.reg, train, test).model;
  }
  export_features(mlp_forward(model, test.x), test.labels(), cfg.out_dir / "features.csv");
}

}  // namespace ctnreg
