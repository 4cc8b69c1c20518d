#ifndef CTNREG_MLR_HPP
#define CTNREG_MLR_HPP

#include "ctnreg/linalg.hpp"
#include "ctnreg/regularizers.hpp"

#include <memory>
#include <vector>

namespace ctnreg {

/// Row-wise softmax of x w^T (n x c), stabilised by subtracting the row max.
Matrix softmax_probs(const Matrix& w, const Matrix& x);

/// Mean cross-entropy of the softmax model and its gradient (P - Y)^T X / n.
ValueAndGrad mlr_loss_and_grad(const Matrix& w, const Matrix& x, const Matrix& y);

/// G(W) = L(W) + lambda * R(W) for one of the regularisers. Construction
/// validates the labels and, for the coupled kind, factorises x once.
class MlrObjective {
 public:
  MlrObjective(Matrix x, Matrix y, RegularizerSpec reg);

  [[nodiscard]] ValueAndGrad value_and_grad(const Matrix& w) const;
  [[nodiscard]] double value(const Matrix& w) const;

  [[nodiscard]] const Matrix& x() const { return x_; }
  [[nodiscard]] const Matrix& y() const { return y_; }
  [[nodiscard]] const RegularizerSpec& regularizer() const { return reg_; }
  [[nodiscard]] Index classes() const { return y_.cols(); }
  [[nodiscard]] Index features() const { return x_.cols(); }

 private:
  Matrix x_;
  Matrix y_;
  RegularizerSpec reg_;
  std::shared_ptr<const CoupledMlrRegularizer> coupled_;
};

ValueAndGrad objective_value_and_grad(const Matrix& w, const MlrObjective& obj);

/// Argmax class per row of x w^T; ties go to the lowest index.
std::vector<Index> predict(const Matrix& w, const Matrix& x);

/// argmax per row, lowest index on ties.
std::vector<Index> argmax_rows(const Matrix& scores);

/// Fraction of rows whose prediction matches the one-hot label.
double accuracy(const std::vector<Index>& predicted, const Matrix& y_onehot);

/// Throws kInvalidInput unless every row of y is a one-hot vector.
void require_onehot(const Matrix& y);

}  // namespace ctnreg

#endif  // CTNREG_MLR_HPP
