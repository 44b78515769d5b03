"""Selects between numba-compiled kernels and their pure numpy/Python twins.

Set ``ANNEALTHERM_DISABLE_NUMBA=1`` before import to force the fallback path.
"""
import os

_FLAG = "ANNEALTHERM_DISABLE_NUMBA"

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    _HAVE_NUMBA = False

USE_NUMBA = _HAVE_NUMBA and os.environ.get(_FLAG, "").strip().lower() not in {"1", "true", "yes", "on"}


def njit(func):
    """``numba.njit(cache=True, nogil=True)`` when numba is usable, else ``func``."""
    if not _HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
