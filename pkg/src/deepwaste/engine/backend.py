"""Kernel backend selection.

Two interchangeable kernel sets exist: numba-jitted loops (default) and a
pure-numpy fallback. DEEPWASTE_BACKEND=numpy|numba picks one at import
time; set_backend()/use_backend() switch at runtime (used by the backend
benchmark and tests). If numba fails to import, numpy is used silently.
"""

from __future__ import annotations

import contextlib
import os

from . import kernels_numpy

ENV_VAR = "DEEPWASTE_BACKEND"

_backends = {"numpy": kernels_numpy}
try:
    from . import kernels_numba

    _backends["numba"] = kernels_numba
    _default = "numba"
except ImportError:  # pragma: no cover - exercised only without numba
    _default = "numpy"


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_backends))


def _from_env() -> str:
    name = os.environ.get(ENV_VAR, "").strip().lower()
    if not name:
        return _default
    if name not in _backends:
        raise ValueError(
            f"{ENV_VAR}={name!r} is not a known backend; choose from {available_backends()}"
        )
    return name


_active = _from_env()


def get_backend() -> str:
    return _active


def set_backend(name: str) -> None:
    global _active
    if name not in _backends:
        raise ValueError(f"unknown backend {name!r}; choose from {available_backends()}")
    _active = name


@contextlib.contextmanager
def use_backend(name: str):
    prev = _active
    set_backend(name)
    try:
        yield
    finally:
        set_backend(prev)


def kernels():
    """The active kernel module (gemm, im2col, depthwise_conv, maxpool, avgpool)."""
    return _backends[_active]
