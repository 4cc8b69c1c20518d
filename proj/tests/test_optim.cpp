#include "ctnreg/error.hpp"
#include "ctnreg/mlr.hpp"
#include "ctnreg/optim.hpp"
#include "oracles.hpp"

#include <doctest.h>

using namespace ctnreg;

namespace {

// phi along a ray of a 1-d function with value f and derivative df.
RayFunction ray(std::function<double(double)> f, std::function<double(double)> df) {
  return [f = std::move(f), df = std::move(df)](double a) { return RayPoint{f(a), df(a)}; };
}

void check_strong_wolfe(const LineSearchResult& r, double f0, double slope0, const WolfeParams& p) {
  CHECK(r.wolfe_satisfied);
  CHECK(r.step > 0.0);
  CHECK(r.point.value <= f0 + p.c1 * r.step * slope0 + 1e-15);
  CHECK(std::abs(r.point.slope) <= p.c2 * std::abs(slope0) + 1e-15);
}

}  // namespace

TEST_CASE("Wolfe line search on a quadratic accepts the unit step") {
  // phi(a) = (1 - a)^2: the exact minimiser is a = 1.
  const auto phi = ray([](double a) { return (1 - a) * (1 - a); }, [](double a) { return -2 * (1 - a); });
  const LineSearchResult r = wolfe_linesearch(phi, 1.0, -2.0);
  CHECK(r.step == doctest::Approx(1.0));
  check_strong_wolfe(r, 1.0, -2.0, {});
}

TEST_CASE("Wolfe line search brackets and zooms") {
  const WolfeParams tight{1e-4, 0.1, 30, 1.0};
  struct Case {
    std::function<double(double)> f, df;
  };
  const std::vector<Case> cases = {
      // minimum far beyond the initial step
      {[](double a) { return (a - 40.0) * (a - 40.0); }, [](double a) { return 2.0 * (a - 40.0); }},
      // minimum well inside the initial step
      {[](double a) { return std::pow(a - 0.01, 2); }, [](double a) { return 2.0 * (a - 0.01); }},
      // non-quadratic
      {[](double a) { return -a / (a * a + 2.0); }, [](double a) { return (a * a - 2.0) / std::pow(a * a + 2.0, 2); }},
      {[](double a) { return std::pow(a + 0.004, 5) - 2.0 * std::pow(a + 0.004, 4); },
       [](double a) { return 5.0 * std::pow(a + 0.004, 4) - 8.0 * std::pow(a + 0.004, 3); }},
  };
  for (const auto& c : cases) {
    const double f0 = c.f(0.0);
    const double s0 = c.df(0.0);
    REQUIRE(s0 < 0.0);
    for (const auto& params : {WolfeParams{}, tight}) {
      check_strong_wolfe(wolfe_linesearch(ray(c.f, c.df), f0, s0, params), f0, s0, params);
    }
  }
}

TEST_CASE("Wolfe line search errors") {
  const auto phi = ray([](double a) { return a; }, [](double) { return 1.0; });
  try {
    (void)wolfe_linesearch(phi, 0.0, 1.0);
    FAIL("expected not-a-descent-direction");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNotDescentDirection);
  }
  // Claims descent but the function only increases: no sufficient-decrease step exists.
  const auto liar = ray([](double a) { return a * a + a; }, [](double) { return -1.0; });
  try {
    (void)wolfe_linesearch(liar, 0.0, -1.0, WolfeParams{1e-4, 0.9, 8, 1.0});
    FAIL("expected a line search failure");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kLineSearchFailure);
  }
  CHECK_THROWS_AS(WolfeParams({0.5, 0.1, 30, 1.0}).validate(), Error);
}

TEST_CASE("gradient descent minimises a convex quadratic") {
  const Matrix target{{1.0, -2.0}, {0.5, 3.0}};
  const Vector scale = Vector::LinSpaced(2, 1.0, 4.0);
  const SmoothObjective quad = [&](const Matrix& w) {
    const Matrix d = w - target;
    ValueAndGrad out;
    out.value = 0.5 * (d.array().colwise() * scale.array() * d.array()).sum();
    out.grad = d.array().colwise() * scale.array();
    return out;
  };
  const GdResult r = gradient_descent(quad, 2, 2);
  CHECK(r.report.stop_reason != StopReason::kMaxIters);
  CHECK((r.w - target).norm() <= 1e-3);
  for (std::size_t k = 1; k < r.report.objective_trajectory.size(); ++k) {
    CHECK(r.report.objective_trajectory[k] <= r.report.objective_trajectory[k - 1] + 1e-12);
  }
}

TEST_CASE("gradient descent on separable MLR") {
  Matrix x;
  Matrix y;
  oracle::separable_2d(40, 3, x, y);
  const MlrObjective obj(x, y, {});
  const GdResult r = gradient_descent([&](const Matrix& w) { return obj.value_and_grad(w); }, 2, 2);
  CHECK(accuracy(predict(r.w, x), y) == 1.0);
  CHECK(r.report.iterations <= 2000);
  const auto& traj = r.report.objective_trajectory;
  CHECK(traj.front() == doctest::Approx(std::log(2.0)));
  for (std::size_t k = 1; k < traj.size(); ++k) CHECK(traj[k] <= traj[k - 1] + 1e-10);
}

TEST_CASE("gradient descent honours the iteration cap and warm start") {
  const SmoothObjective quartic = [](const Matrix& w) {
    return ValueAndGrad{0.25 * w.array().pow(4).sum(), w.array().cube().matrix()};
  };
  GdConfig cfg;
  cfg.max_iters = 1;
  cfg.step_tol = 1e-300;
  cfg.grad_tol = 1e-300;
  cfg.w0 = Matrix::Constant(2, 3, 1.0);
  const GdResult r = gradient_descent(quartic, 2, 3, cfg);
  CHECK(r.report.iterations == 1);
  CHECK(r.report.stop_reason == StopReason::kMaxIters);
  GdConfig bad;
  bad.max_iters = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("subgradient method on a nonsmooth function") {
  // f(w) = |w_1| + |w_2 - 1|, minimum 0 at (0, 1).
  const SmoothObjective f = [](const Matrix& w) {
    ValueAndGrad out;
    out.value = std::abs(w(0, 0)) + std::abs(w(0, 1) - 1.0);
    out.grad = Matrix{{(w(0, 0) > 0) - (w(0, 0) < 0) + 0.0, (w(0, 1) > 1) - (w(0, 1) < 1) + 0.0}};
    return out;
  };
  SubgradConfig cfg;
  cfg.max_iters = 2000;
  cfg.grad_tol = 0.0;
  const SubgradResult r = subgradient_descent(f, Matrix{{3.0, -2.0}}, cfg);
  CHECK(r.report.initial_objective == doctest::Approx(6.0));
  CHECK(r.report.best_objective <= 1e-2);
  CHECK(f(r.best).value == doctest::Approx(r.report.best_objective));
  const auto& best = r.report.best_trajectory;
  for (std::size_t k = 1; k < best.size(); ++k) CHECK(best[k] <= best[k - 1]);
}

TEST_CASE("subgradient method stops on a small subgradient") {
  const SmoothObjective quad = [](const Matrix& w) { return ValueAndGrad{0.5 * w.squaredNorm(), w}; };
  SubgradConfig cfg;
  cfg.grad_tol = 1e-3;
  cfg.max_iters = 100;
  const SubgradResult r = subgradient_descent(quad, Matrix::Constant(1, 1, 1.0), cfg);
  // step 1/1 lands exactly on the minimiser
  CHECK(r.report.stop_reason == StopReason::kGradTol);
  CHECK(r.best.norm() <= 1e-3);
}

TEST_CASE("momentum SGD on least squares is deterministic") {
  const Matrix a = oracle::gaussian(64, 3, 7);
  const Vector truth = Vector::LinSpaced(3, -1.0, 1.0);
  const Vector b = a * truth;
  const BatchObjective ls = [&](const Vector& p, std::span<const Index> batch, Vector& grad) {
    grad = Vector::Zero(3);
    double loss = 0.0;
    for (Index i : batch) {
      const double r = a.row(i).dot(p) - b(i);
      loss += 0.5 * r * r;
      grad += r * a.row(i).transpose();
    }
    grad /= static_cast<double>(batch.size());
    return loss / static_cast<double>(batch.size());
  };
  SgdConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.batch_size = 8;
  cfg.epochs = 60;
  cfg.seed = 11;
  const SgdResult r1 = sgd_momentum(ls, Vector::Zero(3), 64, cfg);
  const SgdResult r2 = sgd_momentum(ls, Vector::Zero(3), 64, cfg);
  CHECK(r1.params == r2.params);
  CHECK(r1.epoch_losses == r2.epoch_losses);
  CHECK((r1.params - truth).norm() <= 1e-3);
  CHECK(r1.epoch_losses.size() == 60);
  cfg.seed = 12;
  CHECK(sgd_momentum(ls, Vector::Zero(3), 64, cfg).params != r1.params);
}

TEST_CASE("SGD rate schedule") {
  SgdConfig cfg;
  cfg.learning_rate = 1.0;
  cfg.epochs = 4;
  CHECK(cfg.rate_for_epoch(1) == 1.0);
  CHECK(cfg.rate_for_epoch(2) == doctest::Approx(0.1));
  cfg.schedule_epochs = 10;
  CHECK(cfg.rate_for_epoch(4) == 1.0);
  CHECK(cfg.rate_for_epoch(5) == doctest::Approx(0.1));
  cfg.momentum = 1.0;
  const BatchObjective zero = [](const Vector& p, std::span<const Index>, Vector& g) {
    g = Vector::Zero(p.size());
    return 0.0;
  };
  CHECK_THROWS_AS(sgd_momentum(zero, Vector::Zero(1), 4, cfg), Error);
}
