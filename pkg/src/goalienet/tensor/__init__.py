"""Minimal reverse-mode autodiff over dense float tensors."""

from goalienet.tensor.engine import (
    ShapeError,
    Tape,
    Tensor,
    add,
    backward,
    conv2d,
    max_pool2d,
    mse_masked,
    relu,
    tensor_sum,
    upsample_nearest2x,
)
from goalienet.tensor.gradcheck import GradCheckResult, gradient_check
from goalienet.tensor.kernels import BACKEND

__all__ = [
    "BACKEND",
    "GradCheckResult",
    "ShapeError",
    "Tape",
    "Tensor",
    "add",
    "backward",
    "conv2d",
    "gradient_check",
    "max_pool2d",
    "mse_masked",
    "relu",
    "tensor_sum",
    "upsample_nearest2x",
]
