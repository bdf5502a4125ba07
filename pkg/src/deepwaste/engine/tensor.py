"""Dense tensor helpers.

Tensors are plain numpy arrays: float32, C-contiguous, row-major, NCHW for
4-D image data. Everything here enforces that convention at module
boundaries so the kernels can assume it.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError

DTYPE = np.float32


def pair(v) -> tuple[int, int]:
    """Normalize an int or 2-sequence to an (int, int) tuple."""
    if isinstance(v, (tuple, list)):
        a, b = v
        return int(a), int(b)
    return int(v), int(v)


def as_tensor(data, shape=None) -> np.ndarray:
    """Coerce to a contiguous float32 array, optionally reshaped.

    Raises ShapeError if the element count does not match `shape`.
    """
    arr = np.ascontiguousarray(data, dtype=DTYPE)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if any(s < 1 for s in shape):
            raise ShapeError(f"shape entries must be >= 1, got {shape}")
        if arr.size != int(np.prod(shape)):
            raise ShapeError(
                f"data has {arr.size} elements, shape {shape} needs {int(np.prod(shape))}"
            )
        arr = arr.reshape(shape)
    if arr.ndim < 1:
        arr = arr.reshape(1)
    return arr


def check_finite(arr: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite values")
    return arr


def conv_output_hw(h, w, kernel, stride, padding, dilation):
    """Output spatial dims of a conv/pool window sweep.

    Raises ShapeError when either output dim would be < 1.
    """
    kh, kw = kernel
    sh, sw = stride
    ph, pw = padding
    dh, dw = dilation
    ho = (h + 2 * ph - dh * (kh - 1) - 1) // sh + 1
    wo = (w + 2 * pw - dw * (kw - 1) - 1) // sw + 1
    if ho < 1 or wo < 1:
        raise ShapeError(
            f"non-positive output size {ho}x{wo} for input {h}x{w}, "
            f"kernel {kh}x{kw}, stride {sh}x{sw}, padding {ph}x{pw}, dilation {dh}x{dw}"
        )
    return ho, wo
