#include "ctnreg/regularizers.hpp"

#include "ctnreg/error.hpp"

#include <cmath>
#include <string>

namespace ctnreg {

std::string_view to_string(RegularizerKind kind) {
  switch (kind) {
    case RegularizerKind::kNone: return "none";
    case RegularizerKind::kL1: return "l1";
    case RegularizerKind::kL2: return "l2";
    case RegularizerKind::kTikhonov: return "tikhonov";
    case RegularizerKind::kCoupled: return "coupled";
  }
  return "none";
}

std::optional<RegularizerKind> parse_regularizer_kind(std::string_view name) {
  for (auto kind : {RegularizerKind::kNone, RegularizerKind::kL1, RegularizerKind::kL2,
                    RegularizerKind::kTikhonov, RegularizerKind::kCoupled}) {
    if (to_string(kind) == name) return kind;
  }
  return std::nullopt;
}

void RegularizerSpec::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw Error(ErrorKind::kInvalidInput, "regularizer weight must be finite and >= 0");
  }
}

ConcatSubgradient concat_value_and_subgrad(const Matrix& x, const Matrix& xi) {
  if (x.rows() != xi.rows()) {
    throw Error(ErrorKind::kInvalidInput, "concat_value_and_subgrad: x and xi must share rows");
  }
  require_finite(x, "x");
  require_finite(xi, "xi");
  const ThinSvd svd = thin_svd(hconcat(x, xi));
  ConcatSubgradient out;
  out.value = svd.singulars.sum();
  out.subgrad = svd.u * svd.v.bottomRows(xi.cols()).transpose();
  return out;
}

ValueAndGrad coupled_reg_mlr(const Matrix& x, const Matrix& w) {
  if (w.cols() != x.cols()) {
    throw Error(ErrorKind::kInvalidInput, "coupled_reg_mlr: w must be c x m with m = cols(x)");
  }
  require_finite(w, "w");
  const Matrix features = x * w.transpose();
  const ThinSvd svd = thin_svd(hconcat(x, features));
  const Index m = x.cols();
  const Index c = w.rows();
  ValueAndGrad out;
  out.value = svd.singulars.sum();
  out.grad = svd.v.bottomRows(c) * svd.singulars.asDiagonal() * svd.v.topRows(m).transpose();
  return out;
}

LipschitzEstimate estimate_lipschitz(const Matrix& x, const Matrix& w, const Matrix& w_hat) {
  if (w.rows() != w_hat.rows() || w.cols() != w_hat.cols() || w.cols() != x.cols()) {
    throw Error(ErrorKind::kInvalidInput, "estimate_lipschitz: inconsistent shapes");
  }
  const double distance = (w - w_hat).norm();
  if (distance == 0.0) {
    throw Error(ErrorKind::kInvalidInput, "estimate_lipschitz: w and w_hat must differ");
  }
  const Matrix e = hconcat(w * x.transpose(), w_hat * x.transpose());
  Eigen::BDCSVD<Matrix> svd_e(e);
  const Vector& se = svd_e.singularValues();
  const double sigma_min = se.size() > 0 ? se(se.size() - 1) : 0.0;
  const double sigma_max = se.size() > 0 ? se(0) : 0.0;
  if (!(sigma_min > 1e-10 * std::max(1.0, sigma_max))) {
    throw Error(ErrorKind::kDegenerateInput,
                "estimate_lipschitz: sigma_min([W X^T, W_hat X^T]) vanishes; the bound does not apply");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(x.transpose() * x, Eigen::EigenvaluesOnly);
  LipschitzEstimate out;
  out.bound = eig.eigenvalues().maxCoeff() / sigma_min;
  out.observed = (coupled_reg_mlr(x, w).grad - coupled_reg_mlr(x, w_hat).grad).norm() / distance;
  return out;
}

ValueAndGrad baseline_reg(const Matrix& w, const RegularizerSpec& spec) {
  ValueAndGrad out;
  switch (spec.kind) {
    case RegularizerKind::kNone:
      out.grad = Matrix::Zero(w.rows(), w.cols());
      return out;
    case RegularizerKind::kL1:
      out.value = w.cwiseAbs().sum();
      out.grad = w.unaryExpr([](double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); });
      return out;
    case RegularizerKind::kL2: {
      out.value = w.norm();
      out.grad = out.value > 0.0 ? Matrix(w / out.value) : Matrix::Zero(w.rows(), w.cols());
      return out;
    }
    case RegularizerKind::kTikhonov:
      out.value = 0.5 * w.squaredNorm();
      out.grad = w;
      return out;
    case RegularizerKind::kCoupled:
      break;
  }
  throw Error(ErrorKind::kInvalidKind, "baseline_reg: the coupled regulariser is data dependent");
}

// ---------------------------------------------------------------------------

CoupledMlrRegularizer::CoupledMlrRegularizer(const Matrix& x) {
  const ThinSvd svd = thin_svd(x);
  v_ = svd.v;
  s_ = svd.singulars;
  s2_ = s_.array().square();
  x_nuclear_ = s_.sum();
}

ValueAndGrad CoupledMlrRegularizer::value_and_grad(const Matrix& w) const {
  if (w.cols() != v_.rows()) {
    throw Error(ErrorKind::kInvalidInput, "CoupledMlrRegularizer: w has the wrong feature count");
  }
  // H = S V^T W^T (r x c).
  const Matrix h = s_.asDiagonal() * (v_.transpose() * w.transpose());
  const SqrtTraceUpdate upd = sqrt_trace_update(s2_, h, true);
  ValueAndGrad out;
  out.value = x_nuclear_ + upd.value;
  // dR/dW = (dR/dH)^T S V^T.
  out.grad = upd.grad.transpose() * s_.asDiagonal() * v_.transpose();
  return out;
}

double CoupledMlrRegularizer::value(const Matrix& w) const {
  if (w.cols() != v_.rows()) {
    throw Error(ErrorKind::kInvalidInput, "CoupledMlrRegularizer: w has the wrong feature count");
  }
  const Matrix h = s_.asDiagonal() * (v_.transpose() * w.transpose());
  return x_nuclear_ + sqrt_trace_update(s2_, h, false).value;
}

ConcatNuclearNorm::ConcatNuclearNorm(const Matrix& x) {
  require_finite(x, "x");
  const Index n = x.rows();
  if (x.cols() == 0 || n == 0) {
    q_ = Matrix::Identity(n, n);
    d_ = Vector::Zero(n);
    return;
  }
  Eigen::BDCSVD<Matrix> svd(x, Eigen::ComputeFullU);
  if (svd.info() != Eigen::Success) {
    throw Error(ErrorKind::kNumericalFailure, "ConcatNuclearNorm: SVD did not converge");
  }
  q_ = svd.matrixU();
  const Vector& s = svd.singularValues();
  d_ = Vector::Zero(n);
  const double cutoff = kDefaultRankTolerance * (s.size() > 0 ? s(0) : 0.0);
  for (Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff) {
      d_(i) = s(i) * s(i);
      x_nuclear_ += s(i);
    }
  }
}

ConcatSubgradient ConcatNuclearNorm::value_and_subgrad(const Matrix& xi) const {
  if (xi.rows() != q_.rows()) {
    throw Error(ErrorKind::kInvalidInput, "ConcatNuclearNorm: xi must have one row per sample");
  }
  const SqrtTraceUpdate upd = sqrt_trace_update(d_, q_.transpose() * xi, true);
  ConcatSubgradient out;
  out.value = x_nuclear_ + upd.value;
  out.subgrad = q_ * upd.grad;
  return out;
}

double ConcatNuclearNorm::value(const Matrix& xi) const {
  if (xi.rows() != q_.rows()) {
    throw Error(ErrorKind::kInvalidInput, "ConcatNuclearNorm: xi must have one row per sample");
  }
  return x_nuclear_ + sqrt_trace_update(d_, q_.transpose() * xi, false).value;
}

}  // namespace ctnreg
