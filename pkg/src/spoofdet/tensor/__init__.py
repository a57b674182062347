"""Minimal reverse-mode autodiff over dense float64 arrays."""

from .core import (
    ConfigurationError,
    DimensionError,
    InputError,
    Tape,
    Tensor,
    UsageError,
    add,
    concat,
    inject_fault,
    mul,
    reshape,
    set_debug,
    transpose,
)
from .gradcheck import grad_check
from .ops import (
    AttentionParams,
    conv2d,
    cross_entropy,
    gelu,
    layer_norm,
    linear,
    matmul,
    maxpool2,
    multi_head_attention,
    relu,
    softmax,
)

__all__ = [
    "AttentionParams",
    "ConfigurationError",
    "DimensionError",
    "InputError",
    "Tape",
    "Tensor",
    "UsageError",
    "add",
    "concat",
    "conv2d",
    "cross_entropy",
    "gelu",
    "grad_check",
    "inject_fault",
    "layer_norm",
    "linear",
    "matmul",
    "maxpool2",
    "mul",
    "multi_head_attention",
    "relu",
    "reshape",
    "set_debug",
    "softmax",
    "transpose",
]
