#ifndef CTNREG_OPTIM_HPP
#define CTNREG_OPTIM_HPP

#include "ctnreg/linalg.hpp"
#include "ctnreg/regularizers.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

namespace ctnreg {

// ---------------------------------------------------------------------------
// Strong Wolfe line search

struct WolfeParams {
  double c1 = 1e-4;  // sufficient decrease
  double c2 = 0.9;   // curvature
  int max_bracket_steps = 30;
  double alpha_init = 1.0;

  void validate() const;
};

/// phi(alpha) and phi'(alpha) along a search ray.
struct RayPoint {
  double value = 0.0;
  double slope = 0.0;
};

using RayFunction = std::function<RayPoint(double alpha)>;

struct LineSearchResult {
  double step = 0.0;
  RayPoint point;
  /// False when the evaluation budget ran out; step then holds the best
  /// sufficient-decrease point seen.
  bool wolfe_satisfied = false;
  int evaluations = 0;
};

/// Bracketing and zoom with safeguarded cubic interpolation. Accepted steps
/// satisfy phi(a) <= f0 + c1 a slope0 and |phi'(a)| <= c2 |slope0|.
/// Throws kNotDescentDirection if slope0 >= 0 and kLineSearchFailure if no
/// sufficient-decrease step was found within the budget.
LineSearchResult wolfe_linesearch(const RayFunction& phi, double f0, double slope0,
                                  const WolfeParams& params = {});

// ---------------------------------------------------------------------------
// Full-gradient descent

enum class StopReason { kStepTol, kGradTol, kMaxIters };

std::string_view to_string(StopReason reason);

struct GdConfig {
  double step_tol = 1e-4;  // ||W^{k+1} - W^k||_F
  double grad_tol = 1e-4;  // ||grad G(W^k)||_F
  int max_iters = 2000;
  Matrix w0;  // empty means zero of the objective's shape

  void validate() const;
};

struct FitReport {
  StopReason stop_reason = StopReason::kMaxIters;
  int iterations = 0;
  std::vector<double> objective_trajectory;
  double final_grad_norm = 0.0;
  int evaluations = 0;
  int linesearch_warnings = 0;
};

using SmoothObjective = std::function<ValueAndGrad(const Matrix&)>;

struct GdResult {
  Matrix w;
  FitReport report;
};

/// W^{k+1} = W^k - alpha_k grad G(W^k) with alpha_k from wolfe_linesearch.
/// Starts from cfg.w0, or from the rows x cols zero matrix when it is empty.
GdResult gradient_descent(const SmoothObjective& objective, Index rows, Index cols,
                          const GdConfig& cfg = {}, const WolfeParams& wolfe = {});

// ---------------------------------------------------------------------------
// Subgradient method

struct SubgradConfig {
  /// Step at iteration k (1-based) is step_scale / k.
  double step_scale = 1.0;
  double grad_tol = 1e-2;
  int max_iters = 50;
};

struct SubgradReport {
  StopReason stop_reason = StopReason::kMaxIters;
  int iterations = 0;
  double initial_objective = 0.0;
  double best_objective = 0.0;
  std::vector<double> best_trajectory;  // best value after each iteration
  double final_subgrad_norm = 0.0;
};

struct SubgradResult {
  Matrix best;
  SubgradReport report;
};

/// Returns the best iterate seen; stops once the current subgradient norm
/// drops below grad_tol.
SubgradResult subgradient_descent(const SmoothObjective& objective, const Matrix& x0,
                                  const SubgradConfig& cfg = {});

// ---------------------------------------------------------------------------
// Mini-batch SGD with classic momentum

struct SgdConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  Index batch_size = 128;
  int epochs = 100;
  std::uint64_t seed = 0;
  /// The rate drops to learning_rate * decay_factor after half of
  /// schedule_epochs (defaults to epochs). epoch_offset places this call
  /// inside a longer schedule.
  int schedule_epochs = 0;
  int epoch_offset = 0;
  double decay_factor = 0.1;

  [[nodiscard]] double rate_for_epoch(int epoch) const;
};

/// Mean loss over `batch` and its gradient written into `grad`.
using BatchObjective =
    std::function<double(const Vector& params, std::span<const Index> batch, Vector& grad)>;

struct SgdResult {
  Vector params;
  std::vector<double> epoch_losses;  // mean of batch losses per epoch
};

SgdResult sgd_momentum(const BatchObjective& objective, Vector params, Index samples,
                       const SgdConfig& cfg);

}  // namespace ctnreg

#endif  // CTNREG_OPTIM_HPP
