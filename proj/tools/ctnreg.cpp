#include "ctnreg/error.hpp"
#include "ctnreg/harness.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <iostream>

namespace {

using ctnreg::Index;

// Flag values; an option only overrides the config when it was given.
struct Flags {
  std::string config;
  std::string model;
  std::string reg;
  double lambda = 0.0;
  double mu = 0.0;
  std::string train_csv;
  std::string test_csv;
  std::string label_col;
  bool no_header = false;
  bool standardize = false;
  std::uint64_t seed = 0;
  std::string out;
  int workers = 1;
  std::string checkpoint;
  std::vector<double> lambda_grid;
  std::vector<std::string> kinds;
  Index n_per_class = 0;
  Index test_per_class = 0;
  Index classes = 0;
  Index features = 0;
  Index rank = 0;
  double noise_sigma = 0.0;
  int max_iters = 0;
  std::vector<Index> hidden;
  int outer_iters = 0;
  int epochs_per_theta = 0;
  double learning_rate = 0.0;

  std::map<std::string, CLI::Option*> opts;

  bool given(const std::string& name) const {
    auto it = opts.find(name);
    return it != opts.end() && it->second->count() > 0;
  }
};

void add_flags(CLI::App& cmd, Flags& f) {
  f.opts["config"] = cmd.add_option("--config", f.config, "JSON config file (flat keys)");
  f.opts["model"] = cmd.add_option("--model", f.model, "mlr or mlp")->check(CLI::IsMember({"mlr", "mlp"}));
  f.opts["reg"] = cmd.add_option("--reg", f.reg, "none, l1, l2, tikhonov or coupled")
                      ->check(CLI::IsMember({"none", "l1", "l2", "tikhonov", "coupled"}));
  f.opts["lambda"] = cmd.add_option("--lambda", f.lambda, "regularization weight");
  f.opts["mu"] = cmd.add_option("--mu", f.mu, "penalty weight (mlp only)");
  f.opts["train_csv"] = cmd.add_option("--train-csv", f.train_csv, "training CSV");
  f.opts["test_csv"] = cmd.add_option("--test-csv", f.test_csv, "test CSV");
  f.opts["label_col"] = cmd.add_option("--label-col", f.label_col, "label column name or index");
  f.opts["no_header"] = cmd.add_flag("--no-header", f.no_header, "CSV files have no header row");
  f.opts["standardize"] = cmd.add_flag("--standardize", f.standardize, "standardize with training statistics");
  f.opts["seed"] = cmd.add_option("--seed", f.seed, "random seed");
  f.opts["out"] = cmd.add_option("--out", f.out, "output directory");
  f.opts["workers"] = cmd.add_option("--workers", f.workers, "concurrent grid points")->check(CLI::PositiveNumber);
  f.opts["checkpoint"] = cmd.add_option("--checkpoint", f.checkpoint, "checkpoint directory");
  f.opts["lambda_grid"] = cmd.add_option("--lambda-grid", f.lambda_grid, "lambda values for sweeps");
  f.opts["kinds"] = cmd.add_option("--kinds", f.kinds, "regularizers to compare");
  f.opts["n_per_class"] = cmd.add_option("--n-per-class", f.n_per_class, "synthetic training samples per class");
  f.opts["test_per_class"] = cmd.add_option("--test-per-class", f.test_per_class, "synthetic test samples per class");
  f.opts["classes"] = cmd.add_option("--classes", f.classes, "synthetic class count");
  f.opts["features"] = cmd.add_option("--features", f.features, "synthetic feature count");
  f.opts["rank"] = cmd.add_option("--rank", f.rank, "synthetic latent rank");
  f.opts["noise_sigma"] = cmd.add_option("--noise-sigma", f.noise_sigma, "synthetic noise level");
  f.opts["max_iters"] = cmd.add_option("--max-iters", f.max_iters, "linear model iteration cap");
  f.opts["hidden"] = cmd.add_option("--hidden", f.hidden, "hidden layer sizes");
  f.opts["outer_iters"] = cmd.add_option("--outer-iters", f.outer_iters, "network outer iterations");
  f.opts["epochs_per_theta"] = cmd.add_option("--epochs-per-theta", f.epochs_per_theta, "SGD epochs per theta update");
  f.opts["learning_rate"] = cmd.add_option("--learning-rate", f.learning_rate, "SGD learning rate");
}

ctnreg::RunConfig build_config(const Flags& f) {
  ctnreg::RunConfig cfg = f.given("config") ? ctnreg::load_config_file(f.config) : ctnreg::RunConfig{};
  if (f.given("model")) cfg.model = *ctnreg::parse_model_kind(f.model);
  if (f.given("reg")) cfg.reg.kind = *ctnreg::parse_regularizer_kind(f.reg);
  if (f.given("lambda")) cfg.reg.lambda = f.lambda;
  if (f.given("mu")) cfg.mu = f.mu;
  if (f.given("train_csv")) cfg.train_csv = f.train_csv;
  if (f.given("test_csv")) cfg.test_csv = f.test_csv;
  if (f.given("label_col")) {
    Index idx = 0;
    const char* end = f.label_col.data() + f.label_col.size();
    const auto [ptr, ec] = std::from_chars(f.label_col.data(), end, idx);
    if (ec == std::errc() && ptr == end) {
      cfg.label_col = idx;
    } else {
      cfg.label_col = f.label_col;
    }
  }
  if (f.given("no_header")) cfg.has_header = false;
  if (f.given("standardize")) cfg.standardize = true;
  if (f.given("seed")) cfg.seed = f.seed;
  if (f.given("out")) cfg.out_dir = f.out;
  if (f.given("workers")) cfg.workers = f.workers;
  if (f.given("checkpoint")) cfg.checkpoint = f.checkpoint;
  if (f.given("lambda_grid")) cfg.lambda_grid = f.lambda_grid;
  if (f.given("kinds")) {
    cfg.kinds.clear();
    for (const auto& k : f.kinds) {
      const auto kind = ctnreg::parse_regularizer_kind(k);
      if (!kind) throw ctnreg::Error(ctnreg::ErrorKind::kConfig, "unknown regularizer '" + k + "'");
      cfg.kinds.push_back(*kind);
    }
  }
  if (f.given("n_per_class")) cfg.synth.n_per_class = f.n_per_class;
  if (f.given("test_per_class")) cfg.test_per_class = f.test_per_class;
  if (f.given("classes")) cfg.synth.classes = f.classes;
  if (f.given("features")) cfg.synth.features = f.features;
  if (f.given("rank")) cfg.synth.rank = f.rank;
  if (f.given("noise_sigma")) cfg.synth.noise_sigma = f.noise_sigma;
  if (f.given("max_iters")) cfg.max_iters = f.max_iters;
  if (f.given("hidden")) cfg.hidden = f.hidden;
  if (f.given("outer_iters")) cfg.outer_iters = f.outer_iters;
  if (f.given("epochs_per_theta")) cfg.epochs_per_theta = f.epochs_per_theta;
  if (f.given("learning_rate")) cfg.learning_rate = f.learning_rate;
  return cfg;
}

void print_fit(const ctnreg::FitSummary& s) {
  std::printf("train accuracy %.4f  test accuracy %.4f  (%s after %d iterations)\n", s.train_accuracy,
              s.test_accuracy, s.stop_reason.c_str(), s.iterations);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coupled tensor norm regularization: training, sweeps and comparisons"};
  app.require_subcommand(1);

  struct Command {
    CLI::App* app;
    Flags flags;
  };
  std::vector<std::unique_ptr<Command>> commands;
  auto add_command = [&](const char* name, const char* help) {
    auto cmd = std::make_unique<Command>();
    cmd->app = app.add_subcommand(name, help);
    add_flags(*cmd->app, cmd->flags);
    commands.push_back(std::move(cmd));
    return commands.back().get();
  };
  Command* train = add_command("train", "fit one model and report train/test accuracy");
  Command* sweep = add_command("sweep", "fit every lambda of the grid for one regularizer");
  Command* compare = add_command("compare", "sweep several regularizers on the same data");
  Command* gen = add_command("gen-synth", "write synthetic low-rank train/test CSV files");
  Command* exp = add_command("export-features", "write test-set logits of a model to features.csv");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->app->parsed()) {
      const auto report = ctnreg::cmd_train(build_config(train->flags));
      print_fit(*report.fit);
    } else if (sweep->app->parsed()) {
      const auto report = ctnreg::cmd_sweep(build_config(sweep->flags));
      std::cout << report.comparison_table();
    } else if (compare->app->parsed()) {
      const auto report = ctnreg::cmd_compare(build_config(compare->flags));
      std::cout << report.comparison_table();
    } else if (gen->app->parsed()) {
      const auto cfg = build_config(gen->flags);
      ctnreg::cmd_gen_synth(cfg);
      std::cout << "wrote " << (cfg.out_dir / "train.csv").string() << " and "
                << (cfg.out_dir / "test.csv").string() << '\n';
    } else if (exp->app->parsed()) {
      const auto cfg = build_config(exp->flags);
      ctnreg::cmd_export_features(cfg);
      std::cout << "wrote " << (cfg.out_dir / "features.csv").string() << '\n';
    }
  } catch (const ctnreg::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.kind() == ctnreg::ErrorKind::kConfig ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
