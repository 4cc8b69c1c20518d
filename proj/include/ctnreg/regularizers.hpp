#ifndef CTNREG_REGULARIZERS_HPP
#define CTNREG_REGULARIZERS_HPP

#include "ctnreg/linalg.hpp"

#include <optional>
#include <string>
#include <string_view>

namespace ctnreg {

enum class RegularizerKind { kNone, kL1, kL2, kTikhonov, kCoupled };

std::string_view to_string(RegularizerKind kind);
std::optional<RegularizerKind> parse_regularizer_kind(std::string_view name);

struct RegularizerSpec {
  RegularizerKind kind = RegularizerKind::kNone;
  double lambda = 0.0;

  /// Weight actually applied: zero for kind none.
  [[nodiscard]] double effective_lambda() const {
    return kind == RegularizerKind::kNone ? 0.0 : lambda;
  }
  void validate() const;
};

/// g(xi) = ||[x, xi]||_* together with the subgradient U V_2^T, where V_2 holds
/// the last c rows of V from the thin SVD of [x, xi].
struct ConcatSubgradient {
  double value = 0.0;
  Matrix subgrad;
};

ConcatSubgradient concat_value_and_subgrad(const Matrix& x, const Matrix& xi);

struct ValueAndGrad {
  double value = 0.0;
  Matrix grad;
};

/// R(W) = ||[x, x W^T]||_* and its gradient V_2 S V_1^T (c x m), from the thin
/// SVD of the explicitly formed concatenation. Reference implementation; the
/// solvers use CoupledMlrRegularizer below.
ValueAndGrad coupled_reg_mlr(const Matrix& x, const Matrix& w);

/// Lipschitz diagnostic for grad R: the analytic bound
/// lambda_max(x^T x) / sigma_min(E) with E = [W x^T, W_hat x^T], next to the
/// observed difference quotient.
struct LipschitzEstimate {
  double bound = 0.0;
  double observed = 0.0;
};

LipschitzEstimate estimate_lipschitz(const Matrix& x, const Matrix& w, const Matrix& w_hat);

/// none -> 0; l1 -> sum |w_ij| with sign(w); l2 -> ||w||_F with w / ||w||_F
/// (0 at w = 0); tikhonov -> 0.5 ||w||_F^2 with w. The value is not scaled by
/// lambda.
ValueAndGrad baseline_reg(const Matrix& w, const RegularizerSpec& spec);

/// R(W) = ||[x, x W^T]||_* for a fixed design matrix x, evaluated through the
/// thin SVD of x computed once at construction. With x = U S V^T,
///
///   R(W) = ||x||_* + tr(S^2 + H H^T)^{1/2} - tr S,   H = S V^T W^T,
///
/// so each evaluation costs O(r m c) plus the resolvent quadrature instead of
/// an SVD of the n x (m + c) concatenation.
class CoupledMlrRegularizer {
 public:
  explicit CoupledMlrRegularizer(const Matrix& x);

  [[nodiscard]] ValueAndGrad value_and_grad(const Matrix& w) const;
  [[nodiscard]] double value(const Matrix& w) const;
  [[nodiscard]] Index features() const { return v_.rows(); }

 private:
  Matrix v_;        // m x r right singular vectors of x
  Vector s_;        // r singular values
  Vector s2_;       // squared singular values
  double x_nuclear_ = 0.0;
};

/// g(xi) = ||[x, xi]||_* for fixed x and varying n x c blocks xi. Uses a full
/// orthonormal basis Q of R^n from the SVD of x, so that Q^T [x, xi] =
/// [diag(s) V^T ; 0 | Q^T xi] and g reduces to the resolvent quadrature.
class ConcatNuclearNorm {
 public:
  explicit ConcatNuclearNorm(const Matrix& x);

  [[nodiscard]] ConcatSubgradient value_and_subgrad(const Matrix& xi) const;
  [[nodiscard]] double value(const Matrix& xi) const;
  [[nodiscard]] Index samples() const { return q_.rows(); }

 private:
  Matrix q_;   // n x n
  Vector d_;   // n squared singular values, zero-padded
  double x_nuclear_ = 0.0;
};

}  // namespace ctnreg

#endif  // CTNREG_REGULARIZERS_HPP
