"""Numba-jitted hot kernels.

The default backend. Each public function mirrors kernels_numpy exactly;
the jitted inner loops assume contiguous float32 inputs, which the ops
layer guarantees.

The GEMM is output-stationary: each 8x32 output tile is accumulated in a
register-resident block while panels of A and B stream through the k loop
(k innermost). Tile sizes were tuned on AVX2/AVX-512 desktops; correctness
never depends on them (edge tiles take the runtime-bound path).
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .tensor import DTYPE, conv_output_hw

NAME = "numba"

_MR = 8
_NR = 32


@njit(fastmath=True, cache=True)
def _gemm(a, b, out):
    m, k_dim = a.shape
    n = b.shape[1]
    acc = np.empty((_MR, _NR), dtype=np.float32)
    af = a.ravel()
    bf = b.ravel()
    of = out.ravel()
    m_full = (m // _MR) * _MR
    for i0 in range(0, m_full, _MR):
        n0 = 0
        while n0 < n:
            nr = min(_NR, n - n0)
            for r in range(_MR):
                for j in range(nr):
                    acc[r, j] = 0.0
            for k in range(k_dim):
                bo = k * n + n0
                ao = i0 * k_dim + k
                a0 = af[ao]
                a1 = af[ao + k_dim]
                a2 = af[ao + 2 * k_dim]
                a3 = af[ao + 3 * k_dim]
                a4 = af[ao + 4 * k_dim]
                a5 = af[ao + 5 * k_dim]
                a6 = af[ao + 6 * k_dim]
                a7 = af[ao + 7 * k_dim]
                for j in range(nr):
                    bv = bf[bo + j]
                    acc[0, j] += a0 * bv
                    acc[1, j] += a1 * bv
                    acc[2, j] += a2 * bv
                    acc[3, j] += a3 * bv
                    acc[4, j] += a4 * bv
                    acc[5, j] += a5 * bv
                    acc[6, j] += a6 * bv
                    acc[7, j] += a7 * bv
            for r in range(_MR):
                oo = (i0 + r) * n + n0
                for j in range(nr):
                    of[oo + j] = acc[r, j]
            n0 += _NR
    # leftover rows, one at a time
    for i in range(m_full, m):
        n0 = 0
        while n0 < n:
            nr = min(_NR, n - n0)
            for j in range(nr):
                acc[0, j] = 0.0
            for k in range(k_dim):
                bo = k * n + n0
                av = af[i * k_dim + k]
                for j in range(nr):
                    acc[0, j] += av * bf[bo + j]
            oo = i * n + n0
            for j in range(nr):
                of[oo + j] = acc[0, j]
            n0 += _NR


def gemm(a: np.ndarray, b: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    out = np.empty((a.shape[0], b.shape[1]), dtype=DTYPE)
    _gemm(a, b, out)
    if bias is not None:
        out += bias[None, :]
    return out


@njit(fastmath=True, cache=True)
def _im2col(x, kh, kw, sh, sw, ph, pw, dh, dw, ho, wo, out):
    c, h, w = x.shape
    for ci in range(c):
        for ki in range(kh):
            for kj in range(kw):
                row = (ci * kh + ki) * kw + kj
                for oy in range(ho):
                    iy = oy * sh - ph + ki * dh
                    base = oy * wo
                    if 0 <= iy < h:
                        for ox in range(wo):
                            ix = ox * sw - pw + kj * dw
                            if 0 <= ix < w:
                                out[row, base + ox] = x[ci, iy, ix]
                            else:
                                out[row, base + ox] = 0.0
                    else:
                        for ox in range(wo):
                            out[row, base + ox] = 0.0


def im2col(x, kernel, stride, padding, dilation) -> np.ndarray:
    c, h, w = x.shape
    kh, kw = kernel
    ho, wo = conv_output_hw(h, w, kernel, stride, padding, dilation)
    out = np.empty((c * kh * kw, ho * wo), dtype=DTYPE)
    _im2col(x, kh, kw, *stride, *padding, *dilation, ho, wo, out)
    return out


@njit(fastmath=True, cache=True)
def _depthwise(x, w, sh, sw, ph, pw, dh, dw, out):
    c, h, wd = x.shape
    kh, kw = w.shape[1], w.shape[2]
    ho, wo = out.shape[1], out.shape[2]
    for ci in range(c):
        for oy in range(ho):
            iy0 = oy * sh - ph
            for ox in range(wo):
                ix0 = ox * sw - pw
                s = np.float32(0.0)
                for ki in range(kh):
                    iy = iy0 + ki * dh
                    if iy < 0 or iy >= h:
                        continue
                    for kj in range(kw):
                        ix = ix0 + kj * dw
                        if 0 <= ix < wd:
                            s += x[ci, iy, ix] * w[ci, ki, kj]
                out[ci, oy, ox] = s


def depthwise_conv(x, w, stride, padding, dilation) -> np.ndarray:
    c, h, wd = x.shape
    kh, kw = w.shape[1:]
    ho, wo = conv_output_hw(h, wd, (kh, kw), stride, padding, dilation)
    out = np.empty((c, ho, wo), dtype=DTYPE)
    _depthwise(x, w, *stride, *padding, *dilation, out)
    return out


@njit(fastmath=True, cache=True)
def _maxpool(x, kh, kw, sh, sw, ph, pw, out):
    c, h, w = x.shape
    ho, wo = out.shape[1], out.shape[2]
    for ci in range(c):
        for oy in range(ho):
            iy0 = oy * sh - ph
            for ox in range(wo):
                ix0 = ox * sw - pw
                best = np.float32(-np.inf)
                for ki in range(kh):
                    iy = iy0 + ki
                    if iy < 0 or iy >= h:
                        continue
                    for kj in range(kw):
                        ix = ix0 + kj
                        if 0 <= ix < w and x[ci, iy, ix] > best:
                            best = x[ci, iy, ix]
                out[ci, oy, ox] = best


@njit(fastmath=True, cache=True)
def _avgpool(x, kh, kw, sh, sw, ph, pw, out):
    c, h, w = x.shape
    ho, wo = out.shape[1], out.shape[2]
    inv = np.float32(1.0 / (kh * kw))
    for ci in range(c):
        for oy in range(ho):
            iy0 = oy * sh - ph
            for ox in range(wo):
                ix0 = ox * sw - pw
                s = np.float32(0.0)
                for ki in range(kh):
                    iy = iy0 + ki
                    if iy < 0 or iy >= h:
                        continue
                    for kj in range(kw):
                        ix = ix0 + kj
                        if 0 <= ix < w:
                            s += x[ci, iy, ix]
                out[ci, oy, ox] = s * inv


def maxpool(x, kernel, stride, padding) -> np.ndarray:
    c, h, w = x.shape
    ho, wo = conv_output_hw(h, w, kernel, stride, padding, (1, 1))
    out = np.empty((c, ho, wo), dtype=DTYPE)
    _maxpool(x, *kernel, *stride, *padding, out)
    return out


def avgpool(x, kernel, stride, padding) -> np.ndarray:
    c, h, w = x.shape
    ho, wo = conv_output_hw(h, w, kernel, stride, padding, (1, 1))
    out = np.empty((c, ho, wo), dtype=DTYPE)
    _avgpool(x, *kernel, *stride, *padding, out)
    return out
