"""Numba switch.

Hot kernels are written once as plain Python over numpy arrays and wrapped
with :func:`njit`. Setting ``SAFEROUTE_DISABLE_NUMBA=1`` (or running without
numba installed) leaves them as ordinary Python, and the dispatchers in
:mod:`saferoute.kernels` pick the vectorized numpy path where one exists.
"""

import os

_DISABLED = os.environ.get("SAFEROUTE_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAS_NUMBA = numba is not None
USE_NUMBA = HAS_NUMBA and not _DISABLED


def njit(func):
    """Compile ``func`` in nopython mode if numba is available.

    The undecorated function stays reachable as ``.py_func`` in both cases so
    callers can run the interpreted path side by side.
    """
    if not HAS_NUMBA:
        func.py_func = func
        return func
    return numba.njit(cache=True)(func)


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
