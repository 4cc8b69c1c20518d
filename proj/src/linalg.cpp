#include "ctnreg/linalg.hpp"

#include "ctnreg/error.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

namespace ctnreg {

void require_finite(const Matrix& a, const char* what) {
  if (!a.allFinite()) {
    throw Error(ErrorKind::kInvalidInput, std::string(what) + " has non-finite entries");
  }
}

Matrix hconcat(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw Error(ErrorKind::kInvalidInput, "hconcat: row mismatch " + std::to_string(a.rows()) +
                                              " vs " + std::to_string(b.rows()));
  }
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

Matrix ThinSvd::reconstruct() const { return u * singulars.asDiagonal() * v.transpose(); }

ThinSvd thin_svd(const Matrix& a, double rank_tolerance) {
  require_finite(a, "thin_svd input");
  if (!(rank_tolerance >= 0.0)) {
    throw Error(ErrorKind::kInvalidInput, "thin_svd: rank_tolerance must be >= 0");
  }
  ThinSvd out;
  out.rank_tolerance = rank_tolerance;
  if (a.size() == 0) {
    out.u = Matrix(a.rows(), 0);
    out.v = Matrix(a.cols(), 0);
    return out;
  }

  Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) {
    throw Error(ErrorKind::kNumericalFailure, "thin_svd: SVD did not converge");
  }
  const Vector& s = svd.singularValues();
  const double sigma_max = s.size() > 0 ? s(0) : 0.0;
  Index r = 0;
  if (sigma_max > 0.0) {
    const double cutoff = rank_tolerance * sigma_max;
    while (r < s.size() && s(r) > cutoff) ++r;
  }
  out.u = svd.matrixU().leftCols(r);
  out.singulars = s.head(r);
  out.v = svd.matrixV().leftCols(r);
  return out;
}

double nuclear_norm(const Matrix& a) {
  require_finite(a, "nuclear_norm input");
  if (a.size() == 0) return 0.0;
  Eigen::BDCSVD<Matrix> svd(a);
  if (svd.info() != Eigen::Success) {
    throw Error(ErrorKind::kNumericalFailure, "nuclear_norm: SVD did not converge");
  }
  return svd.singularValues().sum();
}

Matrix nuclear_norm_subgrad(const Matrix& a) {
  const ThinSvd svd = thin_svd(a);
  return svd.u * svd.v.transpose();
}

// ---------------------------------------------------------------------------
// DenseTensor

namespace {

Index shape_product(const std::vector<Index>& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

void check_shape(const std::vector<Index>& shape) {
  if (shape.empty()) throw Error(ErrorKind::kInvalidInput, "tensor needs at least one mode");
  for (Index s : shape) {
    if (s < 0) throw Error(ErrorKind::kInvalidInput, "negative mode size");
  }
}

void check_mode(std::size_t mode, std::size_t order) {
  if (mode < 1 || mode > order) {
    throw Error(ErrorKind::kInvalidMode, "mode " + std::to_string(mode) +
                                             " out of range [1, " + std::to_string(order) + "]");
  }
}

// Column stride of each mode inside X_(n); the unfolded mode gets 0.
std::vector<Index> unfold_strides(const std::vector<Index>& shape, std::size_t mode) {
  std::vector<Index> stride(shape.size(), 0);
  Index running = 1;
  for (std::size_t k = 0; k < shape.size(); ++k) {
    if (k + 1 == mode) continue;
    stride[k] = running;
    running *= shape[k];
  }
  return stride;
}

// Visits every multi-index in storage order, passing (linear, row, col) of
// the mode-n unfolding.
template <typename F>
void for_each_unfold_position(const std::vector<Index>& shape, std::size_t mode, F&& visit) {
  const std::vector<Index> stride = unfold_strides(shape, mode);
  const Index total = shape_product(shape);
  std::vector<Index> idx(shape.size(), 0);
  Index col = 0;
  for (Index lin = 0; lin < total; ++lin) {
    visit(lin, idx[mode - 1], col);
    for (std::size_t k = 0; k < shape.size(); ++k) {
      if (++idx[k] < shape[k]) {
        col += stride[k];
        break;
      }
      col -= stride[k] * (shape[k] - 1);
      idx[k] = 0;
    }
  }
}

}  // namespace

DenseTensor::DenseTensor(std::vector<Index> shape) : shape_(std::move(shape)) {
  check_shape(shape_);
  entries_.assign(static_cast<std::size_t>(shape_product(shape_)), 0.0);
}

DenseTensor::DenseTensor(std::vector<Index> shape, std::vector<double> entries)
    : shape_(std::move(shape)), entries_(std::move(entries)) {
  check_shape(shape_);
  if (static_cast<Index>(entries_.size()) != shape_product(shape_)) {
    throw Error(ErrorKind::kInvalidInput, "tensor entries do not match the shape product");
  }
}

Index DenseTensor::linear_index(std::span<const Index> index) const {
  if (index.size() != shape_.size()) {
    throw Error(ErrorKind::kInvalidInput, "multi-index has wrong order");
  }
  Index lin = 0;
  Index stride = 1;
  for (std::size_t k = 0; k < shape_.size(); ++k) {
    if (index[k] < 0 || index[k] >= shape_[k]) {
      throw Error(ErrorKind::kInvalidInput, "multi-index out of range");
    }
    lin += index[k] * stride;
    stride *= shape_[k];
  }
  return lin;
}

double DenseTensor::operator()(std::span<const Index> index) const {
  return entries_[static_cast<std::size_t>(linear_index(index))];
}

double& DenseTensor::operator()(std::span<const Index> index) {
  return entries_[static_cast<std::size_t>(linear_index(index))];
}

Matrix mode_n_unfold(const DenseTensor& t, std::size_t mode) {
  check_mode(mode, t.order());
  const Index rows = t.shape()[mode - 1];
  const Index cols = rows == 0 ? 0 : t.size() / rows;
  Matrix out(rows, cols);
  const auto entries = t.entries();
  for_each_unfold_position(t.shape(), mode, [&](Index lin, Index r, Index c) {
    out(r, c) = entries[static_cast<std::size_t>(lin)];
  });
  return out;
}

DenseTensor mode_n_fold(const Matrix& m, std::size_t mode, const std::vector<Index>& shape) {
  check_shape(shape);
  check_mode(mode, shape.size());
  const Index total = shape_product(shape);
  if (m.rows() != shape[mode - 1] || m.size() != total) {
    throw Error(ErrorKind::kInvalidInput, "mode_n_fold: matrix is " + std::to_string(m.rows()) +
                                              "x" + std::to_string(m.cols()) +
                                              ", inconsistent with the requested shape");
  }
  DenseTensor t(shape);
  auto entries = t.entries();
  for_each_unfold_position(shape, mode, [&](Index lin, Index r, Index c) {
    entries[static_cast<std::size_t>(lin)] = m(r, c);
  });
  return t;
}

double coupled_tensor_norm(const DenseTensor& t, const Matrix& a, std::size_t mode) {
  check_mode(mode, t.order());
  if (a.rows() != t.shape()[mode - 1]) {
    throw Error(ErrorKind::kInvalidInput, "coupled_tensor_norm: coupled matrix must have I_n rows");
  }
  double total = nuclear_norm(hconcat(mode_n_unfold(t, mode), a));
  for (std::size_t i = 1; i <= t.order(); ++i) {
    if (i != mode) total += nuclear_norm(mode_n_unfold(t, i));
  }
  return total;
}

// ---------------------------------------------------------------------------
// Resolvent quadrature for tr (D + G G^T)^{1/2}

namespace {

// log det(I + M) for symmetric positive semidefinite M, optionally with
// (I + M)^{-1}. Cholesky of I + M where the diagonal pivots are tracked as
// L_ii^2 - 1, so log L_ii = log1p(.) / 2 keeps full relative accuracy when M
// is tiny.
double log_det_identity_plus(const Matrix& m, Matrix* inverse) {
  const Index c = m.rows();
  Matrix l = Matrix::Zero(c, c);
  double log_det = 0.0;
  for (Index j = 0; j < c; ++j) {
    double t = m(j, j) - l.row(j).head(j).squaredNorm();
    if (!(t > -1.0)) throw Error(ErrorKind::kNumericalFailure, "sqrt_trace_update: I + M is not positive definite");
    l(j, j) = std::sqrt(1.0 + t);
    log_det += std::log1p(t);
    for (Index i = j + 1; i < c; ++i) {
      l(i, j) = (m(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
    }
  }
  if (inverse != nullptr) {
    Matrix linv = l.triangularView<Eigen::Lower>().solve(Matrix::Identity(c, c));
    inverse->noalias() = linv.transpose() * linv;
  }
  return log_det;
}

}  // namespace

SqrtTraceUpdate sqrt_trace_update(const Vector& d, const Matrix& g, bool with_grad) {
  if (g.rows() != d.size()) {
    throw Error(ErrorKind::kInvalidInput, "sqrt_trace_update: G must have one row per entry of d");
  }
  if (!d.allFinite() || (d.size() > 0 && d.minCoeff() < 0.0)) {
    throw Error(ErrorKind::kInvalidInput, "sqrt_trace_update: d must be finite and nonnegative");
  }
  require_finite(g, "sqrt_trace_update block");

  SqrtTraceUpdate out;
  const Index c = g.cols();
  if (with_grad) out.grad = Matrix::Zero(g.rows(), c);
  const double g_norm2 = g.squaredNorm();
  if (c == 0 || g_norm2 == 0.0) return out;

  // Tails: the integrand is bounded by ||G||_F^2 / s^2 above s_hi and grows at
  // most logarithmically below s_lo, so both truncations sit far below double
  // precision relative to the scale of A. In u = log s the integrand is
  // analytic in the strip |Im u| < pi / 2, so the trapezoid error decays like
  // exp(-pi^2 / h).
  const double d_max = d.size() > 0 ? d.maxCoeff() : 0.0;
  const double scale = std::sqrt(std::max(d_max, g_norm2));
  constexpr double kMargin = 36.0;
  constexpr double kStep = 1.0 / 3.0;
  const double u_lo = std::log(scale) - kMargin;
  const double u_hi = std::log(std::sqrt(g_norm2)) + kMargin;
  const Index nodes = static_cast<Index>(std::ceil((u_hi - u_lo) / kStep)) + 1;

  // Rows with d_i = 0 all carry the weight 1 / s^2, which swamps everything
  // else as s -> 0. Rotating them (an orthogonal change inside the null space
  // of D) and the columns of G by the SVD of those rows leaves k <= c rows of
  // the form sigma_j e_j, so the large weights sit on the diagonal of the c x c
  // system instead of cancelling inside it.
  std::vector<Index> live;
  std::vector<Index> null;
  for (Index i = 0; i < d.size(); ++i) (d(i) <= 1e-24 * scale * scale ? null : live).push_back(i);
  const auto r = static_cast<Index>(live.size());
  Matrix gp(r, c);
  Vector dp(r);
  for (Index i = 0; i < r; ++i) {
    gp.row(i) = g.row(live[static_cast<std::size_t>(i)]);
    dp(i) = d(live[static_cast<std::size_t>(i)]);
  }
  Vector sigma;
  Matrix u_null;
  Matrix v_cols;
  if (!null.empty()) {
    Matrix gz(static_cast<Index>(null.size()), c);
    for (std::size_t i = 0; i < null.size(); ++i) gz.row(static_cast<Index>(i)) = g.row(null[i]);
    Eigen::JacobiSVD<Matrix> svd(gz, Eigen::ComputeThinU | Eigen::ComputeFullV);
    Index k = 0;
    while (k < svd.singularValues().size() && svd.singularValues()(k) > 1e-12 * scale) ++k;
    sigma = svd.singularValues().head(k);
    u_null = svd.matrixU().leftCols(k);
    v_cols = svd.matrixV();
    gp = gp * v_cols;
  }
  const Index kz = sigma.size();

  // Symmetric c x c blocks are stored as their upper triangles.
  std::vector<std::pair<Index, Index>> pairs;
  for (Index a = 0; a < c; ++a) {
    for (Index b = a; b < c; ++b) pairs.emplace_back(a, b);
  }
  const auto packed = static_cast<Index>(pairs.size());
  auto unpack = [&](const auto& row, Matrix& m) {
    for (Index p = 0; p < packed; ++p) {
      m(pairs[p].first, pairs[p].second) = row(p);
      m(pairs[p].second, pairs[p].first) = row(p);
    }
  };

  Vector s(nodes);
  for (Index k = 0; k < nodes; ++k) s(k) = std::exp(u_lo + kStep * static_cast<double>(k));
  // resolvent(k, i) = 1 / (d_i + s_k^2); outer.row(i) = g_i^T g_i.
  Matrix resolvent(nodes, r);
  for (Index i = 0; i < r; ++i) resolvent.col(i) = (s.array().square() + dp(i)).inverse();
  Matrix outer(r, packed);
  for (Index p = 0; p < packed; ++p) {
    outer.col(p) = gp.col(pairs[p].first).cwiseProduct(gp.col(pairs[p].second));
  }
  const Matrix grams = resolvent * outer;  // row k = G^T (D + s_k^2)^{-1} G

  Matrix inverses(with_grad ? nodes : 0, packed);
  Matrix null_grad = Matrix::Zero(kz, c);
  Matrix gram(c, c);
  Matrix inv(c, c);
  double acc = 0.0;
  for (Index k = 0; k < nodes; ++k) {
    const double s2 = s(k) * s(k);
    const double w = 2.0 * kStep * s(k);
    unpack(grams.row(k), gram);
    for (Index j = 0; j < kz; ++j) gram(j, j) += sigma(j) * sigma(j) / s2;
    acc += s(k) * log_det_identity_plus(gram, with_grad ? &inv : nullptr);
    if (with_grad) {
      for (Index p = 0; p < packed; ++p) inverses(k, p) = w * inv(pairs[p].first, pairs[p].second);
      for (Index j = 0; j < kz; ++j) null_grad.row(j) += (w * sigma(j) / s2) * inv.row(j);
    }
  }
  out.value = kStep * acc / std::numbers::pi;
  if (with_grad) {
    // grad row i = g_i * sum_k w_k / (d_i + s_k^2) C_k^{-1}
    const Matrix mixed = resolvent.transpose() * inverses;
    Matrix m(c, c);
    Matrix live_grad(r, c);
    for (Index i = 0; i < r; ++i) {
      unpack(mixed.row(i), m);
      live_grad.row(i).noalias() = gp.row(i) * m;
    }
    if (!null.empty()) {
      live_grad = live_grad * v_cols.transpose();
      const Matrix ng = u_null * null_grad * v_cols.transpose();
      for (std::size_t i = 0; i < null.size(); ++i) out.grad.row(null[i]) = ng.row(static_cast<Index>(i));
    }
    for (Index i = 0; i < r; ++i) out.grad.row(live[static_cast<std::size_t>(i)]) = live_grad.row(i);
    out.grad /= std::numbers::pi;
  }
  out.nodes = static_cast<int>(nodes);
  return out;
}

}  // namespace ctnreg
