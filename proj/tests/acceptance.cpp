// Acceptance checks, one line per criterion. Exit status is nonzero if any
// criterion fails; the dataset-gated check is skipped when its files are not
// configured (CTNREG_AR10P_TRAIN / CTNREG_AR10P_TEST, or CTNREG_AR10P_CSV for
// a single file that is split 90/40).

#include "ctnreg/dataio.hpp"
#include "ctnreg/dnn.hpp"
#include "ctnreg/error.hpp"
#include "ctnreg/harness.hpp"
#include "ctnreg/mlr.hpp"
#include "ctnreg/optim.hpp"
#include "ctnreg/regularizers.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>

using namespace ctnreg;

namespace {

enum class Status { kPass, kFail, kSkip };

struct Outcome {
  Status status = Status::kFail;
  std::string detail;
};

Outcome verdict(bool ok, std::string detail) { return {ok ? Status::kPass : Status::kFail, std::move(detail)}; }

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

Matrix random_labels(Index n, Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Matrix y = Matrix::Zero(n, c);
  for (Index i = 0; i < n; ++i) y(i, i < c ? i : static_cast<Index>(rng() % static_cast<std::uint64_t>(c))) = 1.0;
  return y;
}

// --------------------------------------------------------------------------

Outcome gradient_check() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Matrix x = oracle::gaussian(8, 5, 1000 + seed);
    const Matrix w = oracle::gaussian(3, 5, 2000 + seed);
    const Matrix fd = oracle::central_diff(
        [&](const Matrix& v) { return oracle::nuclear_norm(hconcat(x, x * v.transpose())); }, w);
    worst = std::max(worst, (coupled_reg_mlr(x, w).grad - fd).cwiseAbs().maxCoeff());
    worst = std::max(worst, (CoupledMlrRegularizer(x).value_and_grad(w).grad - fd).cwiseAbs().maxCoeff());
  }
  return verdict(worst <= 1e-5, fmt("max entry error %.2e over 20 instances", worst));
}

Outcome subgradient_validity() {
  double worst = std::numeric_limits<double>::infinity();
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Matrix x = oracle::gaussian(6, 4, 3000 + seed);
    const Matrix a = oracle::gaussian(6, 3, 4000 + seed);
    const Matrix b = oracle::gaussian(6, 3, 5000 + seed);
    const ConcatSubgradient ga = concat_value_and_subgrad(x, a);
    const double gb = oracle::nuclear_norm(hconcat(x, b));
    worst = std::min(worst, gb - ga.value - (ga.subgrad.array() * (b - a).array()).sum());
  }
  return verdict(worst >= -1e-9, fmt("min slack %.2e over 100 pairs", worst));
}

Outcome lipschitz_bound() {
  int violations = 0;
  int evaluated = 0;
  double worst_ratio = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Matrix x = oracle::gaussian(8, 5, 6000 + seed);
    const Matrix w = oracle::gaussian(3, 5, 7000 + seed);
    const Matrix w_hat = oracle::gaussian(3, 5, 8000 + seed);
    const LipschitzEstimate est = estimate_lipschitz(x, w, w_hat);
    ++evaluated;
    worst_ratio = std::max(worst_ratio, est.observed / est.bound);
    violations += est.observed > est.bound;
  }
  return verdict(violations == 0, std::to_string(violations) + " violations in " + std::to_string(evaluated) +
                                      " pairs" + fmt(", max observed/bound %.3g", worst_ratio));
}

Outcome objective_convexity() {
  double worst = std::numeric_limits<double>::infinity();
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Matrix x = oracle::gaussian(12, 6, 9000 + seed);
    const Matrix y = random_labels(12, 3, seed);
    const MlrObjective g(x, y, {RegularizerKind::kCoupled, 0.5});
    const Matrix a = oracle::gaussian(3, 6, 10000 + seed, 2.0);
    const Matrix b = oracle::gaussian(3, 6, 11000 + seed, 2.0);
    worst = std::min(worst, 0.5 * (g.value(a) + g.value(b)) - g.value(0.5 * (a + b)));
  }
  return verdict(worst >= -1e-9, fmt("min midpoint slack %.2e over 50 triples", worst));
}

Outcome solver_correctness() {
  Matrix x;
  Matrix y;
  oracle::separable_2d(40, 17, x, y);
  const MlrObjective obj(x, y, {});
  const GdResult r = gradient_descent([&](const Matrix& w) { return obj.value_and_grad(w); }, 2, 2);
  const double acc = accuracy(predict(r.w, x), y);
  double worst_rise = 0.0;
  const auto& traj = r.report.objective_trajectory;
  for (std::size_t k = 1; k < traj.size(); ++k) worst_rise = std::max(worst_rise, traj[k] - traj[k - 1]);
  return verdict(acc == 1.0 && r.report.iterations <= 2000 && worst_rise <= 1e-10,
                 fmt("train accuracy %.3f after %.0f iterations, max rise %.1e", acc,
                     r.report.iterations, worst_rise));
}

Outcome xi_oracle() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix a = oracle::gaussian(6, 3, 12000 + seed);
    const auto h = [&](const Matrix& xi) { return nuclear_norm(xi) + 0.5 * (xi - a).squaredNorm(); };
    const SmoothObjective fn = [&](const Matrix& xi) {
      return ValueAndGrad{h(xi), nuclear_norm_subgrad(xi) + (xi - a)};
    };
    SubgradConfig cfg;
    cfg.max_iters = 500;
    cfg.grad_tol = 1e-6;
    const SubgradResult r = subgradient_descent(fn, Matrix::Zero(6, 3), cfg);
    const double exact = h(oracle::svt(a, 1.0));
    worst = std::max(worst, (r.report.best_objective - exact) / exact);
  }
  return verdict(worst <= 0.05, fmt("max relative gap to the closed form %.2e", worst));
}

Outcome penalty_descent() {
  int failures = 0;
  int not_converged = 0;
  double worst_margin = std::numeric_limits<double>::infinity();
  int max_outer = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SyntheticSpec spec;
    spec.n_per_class = 20;
    spec.classes = 3;
    spec.features = 50;
    spec.rank = 5;
    spec.seed = 100 + seed;
    const Dataset d = gen_synthetic_lowrank(spec);
    AltMinConfig cfg;
    cfg.hidden = {32};
    // The training set is separable, so with a weak coupling the logits drift
    // outward forever and xi never settles. lambda = 1 keeps a finite minimiser;
    // full batches keep the theta-steps from adding sampling noise.
    cfg.lambda = 1.0;
    cfg.mu = 1.0;
    cfg.outer_iters = 25;
    cfg.sgd.batch_size = 60;
    cfg.sgd.learning_rate = 0.01;
    cfg.seed = seed;
    const AltMinResult r = alternating_minimize(d.x, d.y, cfg);
    for (double m : r.report.descent_margin) {
      worst_margin = std::min(worst_margin, m + r.report.eps_mono);
      failures += m < -r.report.eps_mono;
    }
    not_converged += !r.report.converged;
    max_outer = std::max(max_outer, r.report.outer_iterations);
  }
  return verdict(failures == 0 && not_converged == 0,
                 std::to_string(failures) + " inequality violations, " + std::to_string(not_converged) +
                     " runs above the xi tolerance" +
                     fmt(", min slack %.2e, at most %.0f outer iterations", worst_margin, max_outer));
}

Outcome generalization_analogue() {
  RunConfig cfg;
  cfg.synth.n_per_class = 100;
  cfg.synth.classes = 4;
  cfg.synth.features = 400;
  cfg.synth.rank = 5;
  cfg.synth.noise_sigma = 0.1;
  cfg.test_per_class = 200;
  cfg.workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const std::vector<double> grid = default_lambda_grid();
  std::vector<double> coupled_sum(grid.size(), 0.0);
  double none_sum = 0.0;
  const int seeds = 10;
  for (int s = 0; s < seeds; ++s) {
    cfg.seed = static_cast<std::uint64_t>(s);
    const auto [train, test] = load_run_data(cfg);
    const SweepTable none = run_sweep(cfg, RegularizerKind::kNone, train, test);
    const SweepTable coupled = run_sweep(cfg, RegularizerKind::kCoupled, train, test);
    if (!none.rows[0].ok) return verdict(false, "unregularized fit failed: " + none.rows[0].error);
    none_sum += none.rows[0].test_accuracy;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (!coupled.rows[i].ok) return verdict(false, "coupled fit failed: " + coupled.rows[i].error);
      coupled_sum[i] += coupled.rows[i].test_accuracy;
    }
  }
  const std::size_t best =
      static_cast<std::size_t>(std::max_element(coupled_sum.begin(), coupled_sum.end()) - coupled_sum.begin());
  const double none_mean = none_sum / seeds;
  const double coupled_mean = coupled_sum[best] / seeds;
  return verdict(coupled_mean > none_mean,
                 fmt("mean test accuracy none %.4f, coupled %.4f at lambda %g", none_mean, coupled_mean, grid[best]));
}

Outcome dataset_check() {
  const char* train_path = std::getenv("CTNREG_AR10P_TRAIN");
  const char* test_path = std::getenv("CTNREG_AR10P_TEST");
  const char* single = std::getenv("CTNREG_AR10P_CSV");
  Dataset train;
  Dataset test;
  if (train_path && test_path && std::filesystem::exists(train_path) && std::filesystem::exists(test_path)) {
    train = load_csv(train_path, Index{-1}, true);
    test = load_csv(test_path, Index{-1}, true, &train.class_names);
  } else if (single && std::filesystem::exists(single)) {
    const Dataset all = load_csv(single, Index{-1}, true);
    SplitSpec s;
    s.train_fraction = 90.0 / 130.0;
    std::tie(train, test) = split(all, s);
  } else {
    return {Status::kSkip, "AR10P data not configured"};
  }
  const MlrObjective obj(train.x, train.y, {RegularizerKind::kCoupled, 1e-5});
  const GdResult r = gradient_descent([&](const Matrix& w) { return obj.value_and_grad(w); }, train.classes(),
                                      train.features());
  const double acc = accuracy(predict(r.w, test.x), test.y);
  return verdict(acc >= 0.975, fmt("test accuracy %.4f on %.0f samples", acc, static_cast<double>(test.samples())));
}

Outcome backprop_check() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix x = oracle::gaussian(5, 3, 13000 + seed);
    const Matrix y = random_labels(5, 2, seed);
    const Matrix xi = oracle::gaussian(5, 2, 14000 + seed);
    const MlpParams theta = init_mlp({3, 4, 2}, seed);
    std::vector<Index> rows(5);
    std::iota(rows.begin(), rows.end(), Index{0});
    Vector grad;
    (void)mlp_batch_objective(theta, x, y, xi, 0.5, rows, &grad);
    const Matrix fd = oracle::central_diff(
        [&](const Matrix& v) {
          MlpParams t = theta;
          t.assign(v.col(0));
          return mlp_batch_objective(t, x, y, xi, 0.5, rows, nullptr);
        },
        Matrix(theta.flatten()), 1e-6);
    worst = std::max(worst, (grad - fd.col(0)).norm() / std::max(fd.norm(), 1e-12));
  }
  return verdict(worst <= 1e-4, fmt("max relative error %.2e over 10 seeds", worst));
}

Outcome determinism() {
  RunConfig cfg;
  cfg.synth.n_per_class = 30;
  cfg.synth.features = 60;
  cfg.test_per_class = 30;
  cfg.max_iters = 300;
  cfg.seed = 3;
  cfg.out_dir = std::filesystem::temp_directory_path() / "ctnreg_acceptance_compare";
  const auto read = [&] {
    std::ifstream in(cfg.out_dir / "compare_table.csv");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const std::string first = cmd_compare(cfg).comparison_table();
  const std::string first_csv = read();
  cfg.workers = 2;
  const std::string second = cmd_compare(cfg).comparison_table();
  const std::string second_csv = read();
  std::filesystem::remove_all(cfg.out_dir);
  return verdict(first == second && first_csv == second_csv && !first_csv.empty(),
                 "two compare runs (1 and 2 workers) " +
                     std::string(first_csv == second_csv ? "identical" : "differ"));
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;  // 0: no runtime limit
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "coupled regularizer gradient", 5.0, gradient_check},
      {2, "subgradient inequality", 5.0, subgradient_validity},
      {3, "Lipschitz bound", 10.0, lipschitz_bound},
      {4, "objective convexity", 0.0, objective_convexity},
      {5, "gradient descent on separable data", 0.0, solver_correctness},
      {6, "xi subproblem vs soft-thresholding", 10.0, xi_oracle},
      {7, "penalty method descent", 120.0, penalty_descent},
      {8, "synthetic generalization", 300.0, generalization_analogue},
      {9, "AR10P accuracy", 0.0, dataset_check},
      {10, "network backprop", 0.0, backprop_check},
      {11, "compare determinism", 0.0, determinism},
  };
  // Optional arguments: criterion numbers to run.
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));

  int failed = 0;
  for (const Criterion& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {Status::kFail, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (o.status == Status::kPass && c.budget_seconds > 0.0 && secs > c.budget_seconds) {
      o.status = Status::kFail;
      o.detail += fmt("; over the %.0f s budget", c.budget_seconds);
    }
    const char* tag = o.status == Status::kPass ? "PASS" : o.status == Status::kSkip ? "SKIP" : "FAIL";
    std::printf("criterion %2d %-36s %s  %s (%.2f s)\n", c.id, c.name, tag, o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += o.status == Status::kFail;
  }
  return failed == 0 ? 0 : 1;
}
