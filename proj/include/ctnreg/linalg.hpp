#ifndef CTNREG_LINALG_HPP
#define CTNREG_LINALG_HPP

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

namespace ctnreg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kDefaultRankTolerance = 1e-12;

/// Throws kInvalidInput if any entry is NaN or infinite. `what` names the
/// argument in the message.
void require_finite(const Matrix& a, const char* what);

/// Horizontal concatenation [a, b]; both blocks must share the row count.
Matrix hconcat(const Matrix& a, const Matrix& b);

/// Thin singular value decomposition a = u * diag(singulars) * v^T, truncated
/// to the numerical rank: only singular values above
/// rank_tolerance * sigma_max are kept. A zero matrix has r = 0.
struct ThinSvd {
  Matrix u;          // rows(a) x r
  Vector singulars;  // r, descending
  Matrix v;          // cols(a) x r
  double rank_tolerance = kDefaultRankTolerance;

  [[nodiscard]] Index rank() const { return singulars.size(); }
  [[nodiscard]] Matrix reconstruct() const;
};

ThinSvd thin_svd(const Matrix& a, double rank_tolerance = kDefaultRankTolerance);

/// Sum of singular values.
double nuclear_norm(const Matrix& a);

/// Minimal-norm element U V^T of the nuclear-norm subdifferential.
Matrix nuclear_norm_subgrad(const Matrix& a);

/// N-way array of doubles. Entries are stored with the first mode varying
/// fastest (column-major generalised to N modes).
class DenseTensor {
 public:
  DenseTensor() = default;
  explicit DenseTensor(std::vector<Index> shape);
  DenseTensor(std::vector<Index> shape, std::vector<double> entries);

  [[nodiscard]] const std::vector<Index>& shape() const { return shape_; }
  [[nodiscard]] std::size_t order() const { return shape_.size(); }
  [[nodiscard]] Index size() const { return static_cast<Index>(entries_.size()); }
  [[nodiscard]] std::span<const double> entries() const { return entries_; }
  [[nodiscard]] std::span<double> entries() { return entries_; }

  /// Zero-based multi-index access.
  [[nodiscard]] double operator()(std::span<const Index> index) const;
  double& operator()(std::span<const Index> index);

  [[nodiscard]] Index linear_index(std::span<const Index> index) const;

  friend bool operator==(const DenseTensor&, const DenseTensor&) = default;

 private:
  std::vector<Index> shape_;
  std::vector<double> entries_;
};

/// Mode-n unfolding X_(n) with n in [1, N]. Row i is the mode-n index; the
/// column index enumerates the remaining modes with the lowest one varying
/// fastest, so that X_(n) = U_n G_(n) (U_N (x) ... (x) U_1)^T for a Tucker
/// tensor.
Matrix mode_n_unfold(const DenseTensor& t, std::size_t mode);

/// Inverse of mode_n_unfold.
DenseTensor mode_n_fold(const Matrix& m, std::size_t mode, const std::vector<Index>& shape);

/// ||[X_(n), a]||_* + sum_{i != n} ||X_(i)||_*, with a coupled to the tensor
/// along mode n (a has I_n rows; it may have zero columns).
double coupled_tensor_norm(const DenseTensor& t, const Matrix& a, std::size_t mode);

/// Value and gradient of
///
///   tr (D + G G^T)^{1/2} - tr D^{1/2},   D = diag(d) >= 0,
///
/// for a p x c block G, computed without a p x p factorisation. It uses
///
///   tr A^{1/2} - tr D^{1/2} = (1/pi) int_0^inf log det(I_c + G^T (D + s^2)^{-1} G) ds,
///
/// evaluated by the trapezoidal rule in u = log s, which converges
/// geometrically because the integrand is analytic in the strip |Im u| < pi/2.
/// Cost is O(nodes * p * c^2). This is how the coupled regulariser is
/// evaluated inside solvers once the fixed data block has been diagonalised.
struct SqrtTraceUpdate {
  double value = 0.0;
  Matrix grad;  // p x c, derivative with respect to G
  int nodes = 0;
};

SqrtTraceUpdate sqrt_trace_update(const Vector& d, const Matrix& g, bool with_grad = true);

}  // namespace ctnreg

#endif  // CTNREG_LINALG_HPP
