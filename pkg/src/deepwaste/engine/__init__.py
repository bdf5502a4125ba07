"""Compute engine: tensors, the GEMM/im2col primitives, and layer ops."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from . import backend
from .backend import available_backends, get_backend, set_backend, use_backend
from .ops import (
    BatchNormParams,
    ConvParams,
    batchnorm_infer,
    conv2d,
    depthwise_conv2d,
    fold_batchnorm,
    fully_connected,
    global_avg_pool,
    pool2d,
    relu,
    softmax,
)
from .tensor import DTYPE, as_tensor, check_finite, conv_output_hw, pair as _pair

__all__ = [
    "DTYPE",
    "BatchNormParams",
    "ConvParams",
    "as_tensor",
    "available_backends",
    "batchnorm_infer",
    "check_finite",
    "conv2d",
    "conv_output_hw",
    "depthwise_conv2d",
    "fold_batchnorm",
    "fully_connected",
    "gemm",
    "get_backend",
    "global_avg_pool",
    "im2col",
    "pool2d",
    "relu",
    "set_backend",
    "softmax",
    "use_backend",
]


def gemm(a: np.ndarray, b: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """Matrix product a (MxK) @ b (KxN), optionally plus a length-N bias."""
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"gemm inner dimensions disagree: {a.shape} vs {b.shape}")
    if bias is not None:
        bias = as_tensor(bias, (b.shape[1],))
    return backend.kernels().gemm(a, b, bias)


def im2col(x: np.ndarray, kernel, stride=(1, 1), padding=(0, 0), dilation=(1, 1)) -> np.ndarray:
    """Lower a 1xCxHxW (or CxHxW) tensor to a (C*kh*kw) x (Ho*Wo) matrix.

    Column j holds the receptive field of output position j in
    (channel, kernel row, kernel col) order; out-of-bounds reads are zero.
    """
    x = as_tensor(x)
    if x.ndim == 4:
        if x.shape[0] != 1:
            raise ShapeError(f"im2col expects a single image, got batch {x.shape[0]}")
        x = x[0]
    if x.ndim != 3:
        raise ShapeError(f"im2col expects CxHxW input, got shape {x.shape}")
    return backend.kernels().im2col(x, _pair(kernel), _pair(stride), _pair(padding), _pair(dilation))
