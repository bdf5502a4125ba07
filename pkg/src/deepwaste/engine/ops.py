"""Layer primitives for ResNet-50 / MobileNetV1 style inference.

All functions are pure: inputs are never mutated and results are freshly
allocated float32 arrays. Convolution is cross-correlation (no kernel
flip). The heavy lifting goes through the active kernel backend.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..errors import ShapeError
from . import backend
from .tensor import DTYPE, as_tensor, conv_output_hw, pair as _pair


@dataclass(frozen=True)
class ConvParams:
    out_channels: int
    in_channels: int
    kernel: tuple[int, int]
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int] = (0, 0)
    dilation: tuple[int, int] = (1, 1)
    groups: int = 1
    weights: np.ndarray = None
    bias: np.ndarray | None = None

    def __post_init__(self):
        for name in ("kernel", "stride", "padding", "dilation"):
            object.__setattr__(self, name, _pair(getattr(self, name)))
        if self.in_channels % self.groups or self.out_channels % self.groups:
            raise ShapeError(
                f"channels ({self.in_channels} in, {self.out_channels} out) "
                f"not divisible by groups={self.groups}"
            )
        expected = (self.out_channels, self.in_channels // self.groups, *self.kernel)
        object.__setattr__(self, "weights", as_tensor(self.weights, expected))
        if self.bias is not None:
            object.__setattr__(self, "bias", as_tensor(self.bias, (self.out_channels,)))


@dataclass(frozen=True)
class BatchNormParams:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    eps: float = 1e-5

    def __post_init__(self):
        c = len(np.atleast_1d(self.gamma))
        for name in ("gamma", "beta", "running_mean", "running_var"):
            object.__setattr__(self, name, as_tensor(getattr(self, name), (c,)))
        if np.any(self.running_var < 0):
            raise ValueError("running_var must be >= 0 elementwise")
        if self.eps < 0:
            raise ValueError("eps must be >= 0")

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]


def conv2d(x: np.ndarray, p: ConvParams) -> np.ndarray:
    """Cross-correlation with zero padding, im2col+GEMM fast path.

    x: (N, C, H, W) -> (N, O, Ho, Wo). Groups partition channels.
    """
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"conv2d expects NCHW input, got shape {x.shape}")
    n, c, h, w = x.shape
    if c != p.in_channels:
        raise ShapeError(f"input has {c} channels, conv expects {p.in_channels}")
    ho, wo = conv_output_hw(h, w, p.kernel, p.stride, p.padding, p.dilation)
    k = backend.kernels()
    out = np.empty((n, p.out_channels, ho, wo), dtype=DTYPE)

    if p.groups == c and p.groups == p.out_channels and c > 1:
        dw_weights = p.weights.reshape(c, *p.kernel)
        for i in range(n):
            out[i] = k.depthwise_conv(x[i], dw_weights, p.stride, p.padding, p.dilation)
    else:
        cg = c // p.groups
        og = p.out_channels // p.groups
        for i in range(n):
            for g in range(p.groups):
                cols = k.im2col(
                    x[i, g * cg : (g + 1) * cg], p.kernel, p.stride, p.padding, p.dilation
                )
                wmat = p.weights[g * og : (g + 1) * og].reshape(og, -1)
                out[i, g * og : (g + 1) * og] = k.gemm(wmat, cols).reshape(og, ho, wo)
    if p.bias is not None:
        out += p.bias[None, :, None, None]
    return out


def depthwise_conv2d(x: np.ndarray, p: ConvParams) -> np.ndarray:
    """conv2d restricted to groups == in_channels == out_channels."""
    if not (p.groups == p.in_channels == p.out_channels):
        raise ShapeError(
            f"depthwise conv requires groups == in == out channels, got "
            f"groups={p.groups}, in={p.in_channels}, out={p.out_channels}"
        )
    return conv2d(x, p)


def batchnorm_infer(x: np.ndarray, p: BatchNormParams) -> np.ndarray:
    x = as_tensor(x)
    c = x.shape[1]
    if c != p.channels:
        raise ShapeError(f"input has {c} channels, batchnorm has {p.channels}")
    scale = p.gamma / np.sqrt(p.running_var + DTYPE(p.eps))
    shift = p.beta - p.running_mean * scale
    return (x * scale[None, :, None, None] + shift[None, :, None, None]).astype(DTYPE)


def fold_batchnorm(conv: ConvParams, bn: BatchNormParams) -> ConvParams:
    """Merge an inference-mode batchnorm into the preceding conv.

    conv2d(x, folded) == batchnorm_infer(conv2d(x, conv), bn) for all x.
    """
    if bn.channels != conv.out_channels:
        raise ShapeError(
            f"batchnorm has {bn.channels} channels, conv outputs {conv.out_channels}"
        )
    scale = bn.gamma / np.sqrt(bn.running_var + DTYPE(bn.eps))
    weights = conv.weights * scale[:, None, None, None]
    bias = conv.bias if conv.bias is not None else np.zeros(conv.out_channels, dtype=DTYPE)
    bias = (bias - bn.running_mean) * scale + bn.beta
    return replace(conv, weights=weights.astype(DTYPE), bias=bias.astype(DTYPE))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(as_tensor(x), DTYPE(0))


def pool2d(x: np.ndarray, mode: str, kernel, stride=None, padding=0) -> np.ndarray:
    """Window max or mean over NCHW input.

    avg divides by the full window size, so explicitly configured zero
    padding enters the mean (count_include_pad). max ignores padding.
    """
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"pool2d expects NCHW input, got shape {x.shape}")
    kernel = _pair(kernel)
    stride = _pair(stride) if stride is not None else kernel
    padding = _pair(padding)
    if mode not in ("max", "avg"):
        raise ValueError(f"pool mode must be 'max' or 'avg', got {mode!r}")
    n, c, h, w = x.shape
    ho, wo = conv_output_hw(h, w, kernel, stride, padding, (1, 1))
    k = backend.kernels()
    fn = k.maxpool if mode == "max" else k.avgpool
    out = np.empty((n, c, ho, wo), dtype=DTYPE)
    for i in range(n):
        out[i] = fn(x[i], kernel, stride, padding)
    return out


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    """(N, C, H, W) -> (N, C) per-channel spatial mean."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"global_avg_pool expects NCHW input, got shape {x.shape}")
    return x.mean(axis=(2, 3), dtype=np.float32)


def fully_connected(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """(N, F) @ (F, K) + bias K."""
    x = as_tensor(x)
    weights = as_tensor(weights)
    if x.ndim != 2 or weights.ndim != 2 or x.shape[1] != weights.shape[0]:
        raise ShapeError(
            f"fully_connected shapes disagree: input {x.shape} vs weights {weights.shape}"
        )
    bias = as_tensor(bias, (weights.shape[1],))
    return backend.kernels().gemm(x, weights, bias)


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Max-subtracted softmax along `axis`. Rejects NaN input."""
    logits = as_tensor(logits)
    if np.any(np.isnan(logits)):
        raise ValueError("softmax input contains NaN")
    shifted = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return (e / e.sum(axis=axis, keepdims=True)).astype(DTYPE)
