#ifndef CTNREG_DNN_HPP
#define CTNREG_DNN_HPP

#include "ctnreg/linalg.hpp"
#include "ctnreg/optim.hpp"
#include "ctnreg/regularizers.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace ctnreg {

/// Fully connected network m -> h_1 -> ... -> c. Layer l maps a row vector a
/// to a W_l^T + b_l with W_l stored as (out x in); hidden layers apply ReLU,
/// the output layer returns logits.
struct MlpParams {
  std::vector<Index> sizes;
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  [[nodiscard]] static MlpParams zeros(const std::vector<Index>& sizes);
  [[nodiscard]] std::size_t layers() const { return weights.size(); }
  [[nodiscard]] Index inputs() const { return sizes.front(); }
  [[nodiscard]] Index outputs() const { return sizes.back(); }
  [[nodiscard]] Index parameter_count() const;

  /// Layer by layer: weights column-major, then bias.
  [[nodiscard]] Vector flatten() const;
  void assign(const Vector& flat);

  void validate() const;
  bool operator==(const MlpParams& other) const;
};

/// He-normal weights (std sqrt(2 / fan_in)) and zero biases.
MlpParams init_mlp(const std::vector<Index>& sizes, std::uint64_t seed);

/// Logits f_theta(x), n x c.
Matrix mlp_forward(const MlpParams& theta, const Matrix& x);

/// Mini-batch objective over `rows`:
///
///   mean_{i in B} CE(softmax(f_i), y_i) + (n / |B|) (mu / 2) sum_{i in B} ||f_i - xi_i||^2
///
/// which is an unbiased estimate of L(theta) + (mu / 2) ||f_theta(X) - xi||_F^2
/// and equals it when `rows` covers all samples. `xi` may be empty when
/// mu = 0. The gradient with respect to flatten() is written into `grad` when
/// it is non-null.
double mlp_batch_objective(const MlpParams& theta, const Matrix& x, const Matrix& y,
                           const Matrix& xi, double mu, std::span<const Index> rows,
                           Vector* grad);

/// Full-data theta-subproblem objective L(theta) + (mu / 2) ||f_theta(X) - xi||_F^2.
double theta_objective(const MlpParams& theta, const Matrix& x, const Matrix& y,
                       const Matrix& xi, double mu);

struct PenaltyState {
  MlpParams theta;
  Matrix xi;  // n x c, zero at start
  double lambda = 0.0;
  double mu = 0.0;
  int outer_iter = 0;
  std::vector<double> objective_history;

  void validate(Index samples) const;
};

struct PenaltyComponents {
  double loss = 0.0;      // L(theta)
  double coupling = 0.0;  // ||[X, xi]||_*
  double penalty = 0.0;   // 0.5 ||f_theta(X) - xi||_F^2
  double total = 0.0;     // loss + lambda * coupling + mu * penalty
};

/// L(theta) + lambda ||[X, xi]||_* + (mu / 2) ||f_theta(X) - xi||_F^2. When a
/// prebuilt ConcatNuclearNorm for x is passed it is used for the coupling
/// term, otherwise the concatenation is factorised directly.
PenaltyComponents penalty_objective(const PenaltyState& state, const Matrix& x,
                                    const Matrix& y, const ConcatNuclearNorm* coupling = nullptr);

struct ThetaStepConfig {
  SgdConfig sgd;       // epochs is M, the number of passes per theta update
  double eps_mono = 0.0;
  int max_retries = 3;
};

struct ThetaStepResult {
  MlpParams theta;
  double objective_before = 0.0;
  double objective_after = 0.0;
  int retries = 0;
  bool violation = false;
};

/// Runs M epochs of momentum SGD on the theta-subproblem with xi fixed. If the
/// full-data subproblem objective rises by more than eps_mono, the epochs are
/// rerun from the same start with half the learning rate, up to max_retries
/// times; the last attempt is then kept and flagged. A run that diverges
/// counts as a failed attempt, and if all of them diverge the starting
/// parameters are returned.
ThetaStepResult theta_step(const PenaltyState& state, const Matrix& x, const Matrix& y,
                           const ThetaStepConfig& cfg);

struct XiStepConfig {
  double grad_tol = 1e-2;
  int max_iters = 50;
  /// Step at iteration k is step_scale / k; zero selects 1 / mu.
  double step_scale = 0.0;
};

struct XiStepResult {
  Matrix xi;
  SubgradReport report;
  double objective_warm = 0.0;   // h(xi^k)
  double objective_final = 0.0;  // h(returned xi)
  double damping = 1.0;          // fraction of the way to the best iterate
};

/// h(xi) = lambda ||[X, xi]||_* + (mu / 2) ||f - xi||_F^2 for given logits f.
double xi_objective(const ConcatNuclearNorm& coupling, const Matrix& f, const Matrix& xi,
                    double lambda, double mu);

/// Subgradient method on h, warm-started at state.xi. The best iterate is
/// pulled back towards xi^k by the largest t in (0, 1] with
/// h(xi^k) - h(xi^k + t d) >= (mu / 2) t^2 ||d||^2, which strong convexity
/// guarantees for t <= 1/2 + (h(xi^k) - h_best) / (mu ||d||^2). With lambda = 0
/// the minimiser f is returned directly.
XiStepResult xi_step(const PenaltyState& state, const ConcatNuclearNorm& coupling,
                     const Matrix& f, const XiStepConfig& cfg = {});

struct AltMinConfig {
  std::vector<Index> hidden = {256};
  double lambda = 1e-3;
  double mu = 1e-2;
  int outer_iters = 25;
  /// Stop once ||xi^k - xi^{k+1}||_F <= outer_tol_scale * sqrt(n c).
  double outer_tol_scale = 1e-3;
  SgdConfig sgd;  // epochs is M; schedule spans outer_iters * M epochs
  int max_retries = 3;
  XiStepConfig xi;
  std::uint64_t seed = 0;

  AltMinConfig() { sgd.epochs = 2; }
  void validate() const;
};

struct AltMinReport {
  std::vector<double> objective_history;  // L(theta^k, xi^k), k = 0..K
  std::vector<double> xi_change;          // ||xi^k - xi^{k+1}||_F
  /// L^k - L^{k+1} - (mu / 2) ||xi^k - xi^{k+1}||^2; >= -eps_mono when the
  /// descent inequality holds.
  std::vector<double> descent_margin;
  double eps_mono = 0.0;
  double outer_tol = 0.0;
  int outer_iterations = 0;
  bool converged = false;
  int theta_retries = 0;
  int theta_violations = 0;
};

struct AltMinResult {
  PenaltyState state;
  AltMinReport report;
};

/// Alternating minimisation of the penalty objective: theta-step then
/// xi-step until the xi change falls below the outer tolerance or the outer
/// budget is spent. xi starts at zero, theta from init_mlp(seed).
AltMinResult alternating_minimize(const Matrix& x, const Matrix& y, const AltMinConfig& cfg);

struct SgdTrainConfig {
  std::vector<Index> hidden = {256};
  SgdConfig sgd;
};

struct SgdTrainResult {
  MlpParams theta;
  std::vector<double> epoch_losses;
};

/// Plain momentum SGD on L(theta) from init_mlp(sgd.seed).
SgdTrainResult train_mlp_sgd(const Matrix& x, const Matrix& y, const SgdTrainConfig& cfg);

/// Layer sizes m, hidden..., c.
std::vector<Index> layer_sizes(Index inputs, const std::vector<Index>& hidden, Index outputs);

// ---------------------------------------------------------------------------
// Checkpoints: <dir>/manifest.json plus one raw little-endian float64 file per
// weight matrix (row-major) and bias vector.

struct Checkpoint {
  MlpParams theta;
  std::uint64_t seed = 0;
  std::map<std::string, double> hyperparameters;
};

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace ctnreg

#endif  // CTNREG_DNN_HPP
