"""Coupled nuclear-norm regularization.

Thin wrappers over the C++ core. Matrices are NumPy float64 arrays; tensors
are N-d arrays and unfolding modes are counted from 1.
"""

from ._core import (
    CoupledRegularizer,
    Error,
    accuracy,
    baseline_reg,
    concat_subgrad,
    coupled_reg,
    coupled_tensor_norm,
    fit_mlr,
    fold,
    gen_synthetic,
    mlp_forward,
    mlr_loss,
    nuclear_norm,
    nuclear_norm_subgrad,
    predict,
    softmax_probs,
    thin_svd,
    train_penalty,
    unfold,
)

__all__ = [
    "CoupledRegularizer",
    "Error",
    "accuracy",
    "baseline_reg",
    "concat_subgrad",
    "coupled_reg",
    "coupled_tensor_norm",
    "fit_mlr",
    "fold",
    "gen_synthetic",
    "mlp_forward",
    "mlr_loss",
    "nuclear_norm",
    "nuclear_norm_subgrad",
    "predict",
    "softmax_probs",
    "thin_svd",
    "train_penalty",
    "unfold",
]

__version__ = "0.1.0"
