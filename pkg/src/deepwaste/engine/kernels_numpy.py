"""Pure-numpy fallback kernels.

Same contracts as kernels_numba; selected via DEEPWASTE_BACKEND=numpy or
when numba is unavailable. The matmul here delegates blocking to BLAS;
everything else is as_strided window tricks.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .tensor import DTYPE, conv_output_hw

NAME = "numpy"


def gemm(a: np.ndarray, b: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    out = a @ b
    if bias is not None:
        out = out + bias[None, :]
    return np.ascontiguousarray(out, dtype=DTYPE)


def _pad_chw(x, ph, pw, value=0.0):
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (ph, ph), (pw, pw)), constant_values=value)


def im2col(x, kernel, stride, padding, dilation) -> np.ndarray:
    """x: (C, H, W) -> (C*kh*kw, Ho*Wo), rows in (c, ki, kj) order."""
    c, h, w = x.shape
    kh, kw = kernel
    sh, sw = stride
    dh, dw = dilation
    ho, wo = conv_output_hw(h, w, kernel, stride, padding, dilation)
    xp = _pad_chw(x, *padding)
    sc, sy, sx = xp.strides
    patches = as_strided(
        xp,
        shape=(c, kh, kw, ho, wo),
        strides=(sc, dh * sy, dw * sx, sh * sy, sw * sx),
        writeable=False,
    )
    return np.ascontiguousarray(patches.reshape(c * kh * kw, ho * wo))


def depthwise_conv(x, w, stride, padding, dilation) -> np.ndarray:
    """x: (C, H, W), w: (C, kh, kw) -> (C, Ho, Wo)."""
    c, h, wd = x.shape
    kh, kw = w.shape[1:]
    sh, sw = stride
    dh, dw = dilation
    ho, wo = conv_output_hw(h, wd, (kh, kw), stride, padding, dilation)
    xp = _pad_chw(x, *padding)
    sc, sy, sx = xp.strides
    windows = as_strided(
        xp,
        shape=(c, ho, wo, kh, kw),
        strides=(sc, sh * sy, sw * sx, dh * sy, dw * sx),
        writeable=False,
    )
    return np.einsum("cyxkl,ckl->cyx", windows, w, optimize=True).astype(DTYPE)


def _pool_windows(x, kernel, stride, padding, pad_value):
    c, h, w = x.shape
    kh, kw = kernel
    sh, sw = stride
    ho, wo = conv_output_hw(h, w, kernel, stride, padding, (1, 1))
    xp = _pad_chw(x, *padding, value=pad_value)
    sc, sy, sx = xp.strides
    return as_strided(
        xp,
        shape=(c, ho, wo, kh, kw),
        strides=(sc, sh * sy, sw * sx, sy, sx),
        writeable=False,
    )


def maxpool(x, kernel, stride, padding) -> np.ndarray:
    # padded positions never win: they are filled with -inf
    windows = _pool_windows(x, kernel, stride, padding, -np.inf)
    return windows.max(axis=(-2, -1)).astype(DTYPE)


def avgpool(x, kernel, stride, padding) -> np.ndarray:
    # count_include_pad: zeros in the padding ring enter the mean
    windows = _pool_windows(x, kernel, stride, padding, 0.0)
    return windows.mean(axis=(-2, -1), dtype=np.float32)
