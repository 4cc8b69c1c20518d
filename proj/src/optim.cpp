#include "ctnreg/optim.hpp"

#include "ctnreg/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>

namespace ctnreg {

void WolfeParams::validate() const {
  if (!(0.0 < c1 && c1 < c2 && c2 < 1.0)) {
    throw Error(ErrorKind::kInvalidInput, "Wolfe constants need 0 < c1 < c2 < 1");
  }
  if (max_bracket_steps < 1 || !(alpha_init > 0.0)) {
    throw Error(ErrorKind::kInvalidInput, "Wolfe budget and initial step must be positive");
  }
}

namespace {

// Minimiser of the cubic matching values and slopes at a and b, clamped to
// the inner 80% of the interval; bisection when the cubic is degenerate.
double cubic_step(double a, double fa, double ga, double b, double fb, double gb) {
  const double lo = std::min(a, b);
  const double hi = std::max(a, b);
  const double width = hi - lo;
  double t = 0.5 * (a + b);
  const double d1 = ga + gb - 3.0 * (fa - fb) / (a - b);
  const double disc = d1 * d1 - ga * gb;
  if (disc >= 0.0 && std::isfinite(disc)) {
    const double d2 = std::copysign(std::sqrt(disc), b - a);
    const double denom = gb - ga + 2.0 * d2;
    if (denom != 0.0) {
      const double cand = b - (b - a) * (gb + d2 - d1) / denom;
      if (std::isfinite(cand)) t = cand;
    }
  }
  return std::clamp(t, lo + 0.1 * width, hi - 0.1 * width);
}

struct Probe {
  double alpha = 0.0;
  RayPoint point;
};

class WolfeSearch {
 public:
  WolfeSearch(const RayFunction& phi, double f0, double slope0, const WolfeParams& p)
      : phi_(phi), f0_(f0), slope0_(slope0), p_(p) {}

  LineSearchResult run() {
    Probe prev{0.0, {f0_, slope0_}};
    double alpha = p_.alpha_init;
    while (budget_left()) {
      const Probe cur = eval(alpha);
      if (!armijo(cur) || (evals_ > 1 && cur.point.value >= prev.point.value)) {
        return zoom(prev, cur);
      }
      if (curvature(cur)) return accept(cur);
      if (cur.point.slope >= 0.0) return zoom(cur, prev);
      prev = cur;
      alpha *= 2.0;
    }
    return exhausted();
  }

 private:
  bool budget_left() const { return evals_ < p_.max_bracket_steps; }

  bool armijo(const Probe& q) const {
    return std::isfinite(q.point.value) && q.point.value <= f0_ + p_.c1 * q.alpha * slope0_;
  }
  bool curvature(const Probe& q) const {
    return std::abs(q.point.slope) <= p_.c2 * std::abs(slope0_);
  }

  Probe eval(double alpha) {
    Probe q{alpha, phi_(alpha)};
    ++evals_;
    if (armijo(q) && (!best_ || q.point.value < best_->point.value)) best_ = q;
    return q;
  }

  LineSearchResult accept(const Probe& q) const {
    return {q.alpha, q.point, true, evals_};
  }

  LineSearchResult exhausted() const {
    if (!best_) {
      throw Error(ErrorKind::kLineSearchFailure,
                  "no step with sufficient decrease after " + std::to_string(evals_) +
                      " evaluations (f0 = " + std::to_string(f0_) +
                      ", slope0 = " + std::to_string(slope0_) + ")");
    }
    return {best_->alpha, best_->point, false, evals_};
  }

  // Invariant: lo satisfies sufficient decrease and has the lowest value
  // seen among such points; phi'(lo) * (hi - lo) < 0.
  LineSearchResult zoom(Probe lo, Probe hi) {
    while (budget_left()) {
      const double alpha = cubic_step(lo.alpha, lo.point.value, lo.point.slope, hi.alpha,
                                      hi.point.value, hi.point.slope);
      const Probe cur = eval(alpha);
      if (!armijo(cur) || cur.point.value >= lo.point.value) {
        hi = cur;
        continue;
      }
      if (curvature(cur)) return accept(cur);
      if (cur.point.slope * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
      lo = cur;
    }
    return exhausted();
  }

  const RayFunction& phi_;
  double f0_;
  double slope0_;
  WolfeParams p_;
  int evals_ = 0;
  std::optional<Probe> best_;
};

}  // namespace

LineSearchResult wolfe_linesearch(const RayFunction& phi, double f0, double slope0,
                                  const WolfeParams& params) {
  params.validate();
  if (!(slope0 < 0.0)) {
    throw Error(ErrorKind::kNotDescentDirection,
                "initial slope " + std::to_string(slope0) + " is not negative");
  }
  return WolfeSearch(phi, f0, slope0, params).run();
}

// ---------------------------------------------------------------------------

std::string_view to_string(StopReason reason) {
  switch (reason) {
    case StopReason::kStepTol: return "step-tol";
    case StopReason::kGradTol: return "grad-tol";
    case StopReason::kMaxIters: return "max-iters";
  }
  return "max-iters";
}

void GdConfig::validate() const {
  if (!(step_tol > 0.0) || !(grad_tol > 0.0) || max_iters < 1) {
    throw Error(ErrorKind::kInvalidInput, "gradient descent tolerances must be > 0 and max_iters >= 1");
  }
}

GdResult gradient_descent(const SmoothObjective& objective, Index rows, Index cols,
                          const GdConfig& cfg, const WolfeParams& wolfe) {
  cfg.validate();
  wolfe.validate();
  GdResult out;
  out.w = cfg.w0.size() > 0 ? cfg.w0 : Matrix::Zero(rows, cols);
  FitReport& rep = out.report;

  ValueAndGrad cur = objective(out.w);
  ++rep.evaluations;
  if (!std::isfinite(cur.value) || !cur.grad.allFinite()) {
    throw Error(ErrorKind::kNumericalFailure, "objective is not finite at the starting point");
  }
  rep.objective_trajectory.push_back(cur.value);

  double prev_step = 0.0;
  double prev_slope = 0.0;
  std::vector<std::pair<double, ValueAndGrad>> probes;
  for (int k = 0; k < cfg.max_iters; ++k) {
    const double grad_norm = cur.grad.norm();
    rep.final_grad_norm = grad_norm;
    if (grad_norm <= cfg.grad_tol) {
      rep.stop_reason = StopReason::kGradTol;
      return out;
    }
    const Matrix direction = -cur.grad;
    const double slope0 = -grad_norm * grad_norm;

    WolfeParams params = wolfe;
    if (k > 0 && prev_step > 0.0) {
      // Expect the same first-order change as the previous step.
      params.alpha_init = std::max(prev_step * prev_slope / slope0, 1e-12);
    }

    probes.clear();
    const RayFunction phi = [&](double alpha) {
      ValueAndGrad vg = objective(out.w + alpha * direction);
      const double slope = (vg.grad.array() * direction.array()).sum();
      const double value = vg.value;
      probes.emplace_back(alpha, std::move(vg));
      return RayPoint{value, slope};
    };
    const LineSearchResult ls = wolfe_linesearch(phi, cur.value, slope0, params);
    rep.evaluations += ls.evaluations;
    if (!ls.wolfe_satisfied) ++rep.linesearch_warnings;

    auto hit = std::find_if(probes.begin(), probes.end(),
                            [&](const auto& pr) { return pr.first == ls.step; });
    if (hit == probes.end()) {
      throw Error(ErrorKind::kLineSearchFailure, "accepted step was never evaluated");
    }
    const Matrix step = ls.step * direction;
    out.w += step;
    cur = std::move(hit->second);
    rep.objective_trajectory.push_back(cur.value);
    rep.iterations = k + 1;
    prev_step = ls.step;
    prev_slope = slope0;
    if (step.norm() <= cfg.step_tol) {
      rep.final_grad_norm = cur.grad.norm();
      rep.stop_reason = StopReason::kStepTol;
      return out;
    }
  }
  rep.final_grad_norm = cur.grad.norm();
  rep.stop_reason = StopReason::kMaxIters;
  return out;
}

// ---------------------------------------------------------------------------

SubgradResult subgradient_descent(const SmoothObjective& objective, const Matrix& x0,
                                  const SubgradConfig& cfg) {
  if (cfg.max_iters < 0 || !(cfg.step_scale > 0.0) || !(cfg.grad_tol >= 0.0)) {
    throw Error(ErrorKind::kInvalidInput, "subgradient method: invalid configuration");
  }
  SubgradResult out;
  out.best = x0;
  SubgradReport& rep = out.report;

  Matrix x = x0;
  ValueAndGrad cur = objective(x);
  if (!std::isfinite(cur.value) || !cur.grad.allFinite()) {
    throw Error(ErrorKind::kNumericalFailure, "subgradient method: non-finite objective at x0");
  }
  rep.initial_objective = cur.value;
  rep.best_objective = cur.value;
  rep.final_subgrad_norm = cur.grad.norm();

  for (int k = 1; k <= cfg.max_iters; ++k) {
    if (rep.final_subgrad_norm < cfg.grad_tol) {
      rep.stop_reason = StopReason::kGradTol;
      return out;
    }
    x -= (cfg.step_scale / k) * cur.grad;
    cur = objective(x);
    if (!std::isfinite(cur.value) || !cur.grad.allFinite()) {
      throw Error(ErrorKind::kNumericalFailure,
                  "subgradient method: non-finite objective at iteration " + std::to_string(k));
    }
    rep.iterations = k;
    rep.final_subgrad_norm = cur.grad.norm();
    if (cur.value < rep.best_objective) {
      rep.best_objective = cur.value;
      out.best = x;
    }
    rep.best_trajectory.push_back(rep.best_objective);
  }
  rep.stop_reason =
      rep.final_subgrad_norm < cfg.grad_tol ? StopReason::kGradTol : StopReason::kMaxIters;
  return out;
}

// ---------------------------------------------------------------------------

double SgdConfig::rate_for_epoch(int epoch) const {
  const int total = schedule_epochs > 0 ? schedule_epochs : epochs;
  return 2 * epoch < total ? learning_rate : learning_rate * decay_factor;
}

SgdResult sgd_momentum(const BatchObjective& objective, Vector params, Index samples,
                       const SgdConfig& cfg) {
  if (samples < 1) throw Error(ErrorKind::kInvalidInput, "sgd: dataset is empty");
  if (cfg.batch_size < 1 || cfg.epochs < 0 || !(cfg.learning_rate > 0.0) ||
      !(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) {
    throw Error(ErrorKind::kInvalidInput, "sgd: invalid configuration");
  }
  std::mt19937_64 rng(cfg.seed);
  std::vector<Index> order(static_cast<std::size_t>(samples));
  std::iota(order.begin(), order.end(), Index{0});

  SgdResult out;
  Vector velocity = Vector::Zero(params.size());
  Vector grad(params.size());
  for (int e = 0; e < cfg.epochs; ++e) {
    const double rate = cfg.rate_for_epoch(cfg.epoch_offset + e);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (Index start = 0; start < samples; start += cfg.batch_size) {
      const Index len = std::min(cfg.batch_size, samples - start);
      const std::span<const Index> batch(order.data() + start, static_cast<std::size_t>(len));
      grad.setZero();
      const double loss = objective(params, batch, grad);
      if (!std::isfinite(loss) || !grad.allFinite()) {
        throw Error(ErrorKind::kNumericalFailure,
                    "sgd: non-finite loss or gradient in epoch " + std::to_string(e));
      }
      velocity = cfg.momentum * velocity - rate * grad;
      params += velocity;
      loss_sum += loss;
      ++batches;
    }
    out.epoch_losses.push_back(loss_sum / std::max(batches, 1));
  }
  out.params = std::move(params);
  return out;
}

}  // namespace ctnreg
