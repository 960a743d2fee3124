"""Small deterministic neural-network engine on numpy (float64)."""

from .autodiff import (
    Tensor,
    add,
    backward,
    concat,
    log_softmax,
    matmul,
    mul,
    no_grad,
    relu,
    reshape,
    segment_sum,
    softmax,
    softmax_cross_entropy,
    sum_axis,
    take_rows,
)
from .layers import ContinuousConv, DeepSetAggregation, Linear, Mlp
from .optim import Adam, TrainingError

__all__ = [
    "Tensor", "add", "backward", "concat", "log_softmax", "matmul", "mul", "no_grad", "relu",
    "reshape", "segment_sum", "softmax", "softmax_cross_entropy", "sum_axis", "take_rows",
    "ContinuousConv", "DeepSetAggregation", "Linear", "Mlp", "Adam", "TrainingError",
]
