"""Numba switch for the hot integrator kernels.

Set ``COUETTE_EP_NUMBA=0`` before import to run every kernel as plain
Python/numpy.  The jitted and fallback paths share one source.
"""
from __future__ import annotations

import os

_FLAG = os.environ.get("COUETTE_EP_NUMBA", "1").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

USE_NUMBA = numba is not None and _FLAG not in ("0", "false", "no", "off")


def jit(func):
    """``numba.njit(cache=True, nogil=True)`` when enabled, identity otherwise."""
    if USE_NUMBA:
        return numba.njit(cache=True, nogil=True)(func)
    return func


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
