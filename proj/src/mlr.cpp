#include "ctnreg/mlr.hpp"

#include "ctnreg/error.hpp"

#include <cmath>
#include <string>

namespace ctnreg {

namespace {

void check_shapes(const Matrix& w, const Matrix& x) {
  if (w.cols() != x.cols()) {
    throw Error(ErrorKind::kInvalidInput, "weights are " + std::to_string(w.rows()) + "x" +
                                              std::to_string(w.cols()) + " but x has " +
                                              std::to_string(x.cols()) + " features");
  }
}

// Shifted logits z - max(z) and the per-row log-sum-exp of the shifted values.
struct StableLogits {
  Matrix shifted;
  Vector log_norm;
};

StableLogits stable_logits(const Matrix& w, const Matrix& x) {
  StableLogits out;
  out.shifted = x * w.transpose();
  const Vector row_max = out.shifted.rowwise().maxCoeff();
  out.shifted.colwise() -= row_max;
  out.log_norm = out.shifted.array().exp().rowwise().sum().log();
  if (!out.shifted.allFinite() || !out.log_norm.allFinite()) {
    throw Error(ErrorKind::kNumericalFailure, "softmax: non-finite logits");
  }
  return out;
}

}  // namespace

Matrix softmax_probs(const Matrix& w, const Matrix& x) {
  check_shapes(w, x);
  const StableLogits z = stable_logits(w, x);
  Matrix p = z.shifted;
  p.colwise() -= z.log_norm;
  return p.array().exp().matrix();
}

void require_onehot(const Matrix& y) {
  for (Index i = 0; i < y.rows(); ++i) {
    int ones = 0;
    for (Index k = 0; k < y.cols(); ++k) {
      const double v = y(i, k);
      if (v == 1.0) {
        ++ones;
      } else if (v != 0.0) {
        ones = -1;
        break;
      }
    }
    if (ones != 1) {
      throw Error(ErrorKind::kInvalidInput, "label row " + std::to_string(i) + " is not one-hot");
    }
  }
}

ValueAndGrad mlr_loss_and_grad(const Matrix& w, const Matrix& x, const Matrix& y) {
  check_shapes(w, x);
  if (y.rows() != x.rows() || y.cols() != w.rows()) {
    throw Error(ErrorKind::kInvalidInput, "labels must be n x c");
  }
  const double n = static_cast<double>(x.rows());
  const StableLogits z = stable_logits(w, x);
  // -sum_j y_ij z_ij + logsumexp_i, with z already shifted (the shift cancels).
  const double fit = (y.array() * z.shifted.array()).sum();
  ValueAndGrad out;
  out.value = (z.log_norm.sum() - fit) / n;
  Matrix p = z.shifted;
  p.colwise() -= z.log_norm;
  p = p.array().exp().matrix() - y;
  out.grad = p.transpose() * x / n;
  return out;
}

MlrObjective::MlrObjective(Matrix x, Matrix y, RegularizerSpec reg)
    : x_(std::move(x)), y_(std::move(y)), reg_(reg) {
  reg_.validate();
  if (x_.rows() < 1 || y_.rows() != x_.rows()) {
    throw Error(ErrorKind::kInvalidInput, "MlrObjective: need n >= 1 samples with matching labels");
  }
  if (y_.cols() < 2) throw Error(ErrorKind::kInvalidInput, "MlrObjective: need at least two classes");
  require_finite(x_, "x");
  require_onehot(y_);
  if (reg_.kind == RegularizerKind::kCoupled && reg_.lambda > 0.0) {
    coupled_ = std::make_shared<const CoupledMlrRegularizer>(x_);
  }
}

ValueAndGrad MlrObjective::value_and_grad(const Matrix& w) const {
  ValueAndGrad out = mlr_loss_and_grad(w, x_, y_);
  const double lambda = reg_.effective_lambda();
  if (lambda == 0.0) return out;
  const ValueAndGrad r =
      coupled_ ? coupled_->value_and_grad(w) : baseline_reg(w, reg_);
  out.value += lambda * r.value;
  out.grad += lambda * r.grad;
  return out;
}

double MlrObjective::value(const Matrix& w) const {
  const double lambda = reg_.effective_lambda();
  double v = mlr_loss_and_grad(w, x_, y_).value;
  if (lambda == 0.0) return v;
  v += lambda * (coupled_ ? coupled_->value(w) : baseline_reg(w, reg_).value);
  return v;
}

ValueAndGrad objective_value_and_grad(const Matrix& w, const MlrObjective& obj) {
  return obj.value_and_grad(w);
}

std::vector<Index> argmax_rows(const Matrix& scores) {
  std::vector<Index> out(static_cast<std::size_t>(scores.rows()), 0);
  for (Index i = 0; i < scores.rows(); ++i) {
    Index best = 0;
    for (Index k = 1; k < scores.cols(); ++k) {
      if (scores(i, k) > scores(i, best)) best = k;
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

std::vector<Index> predict(const Matrix& w, const Matrix& x) {
  check_shapes(w, x);
  return argmax_rows(x * w.transpose());
}

double accuracy(const std::vector<Index>& predicted, const Matrix& y_onehot) {
  if (static_cast<Index>(predicted.size()) != y_onehot.rows()) {
    throw Error(ErrorKind::kInvalidInput, "accuracy: prediction count does not match labels");
  }
  if (predicted.empty()) return 0.0;
  Index hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const Index k = predicted[i];
    if (k >= 0 && k < y_onehot.cols() && y_onehot(static_cast<Index>(i), k) == 1.0) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

}  // namespace ctnreg
