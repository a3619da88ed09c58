"""Numba availability and the env switch that selects the numpy fallback.

Set ``SAFEBLEND_DISABLE_NUMBA=1`` before import to force every hot kernel onto
its pure-numpy implementation.
"""

import os

_FLAG = os.environ.get("SAFEBLEND_DISABLE_NUMBA", "").strip().lower()
DISABLED_BY_ENV = _FLAG in {"1", "true", "yes", "on"}

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not DISABLED_BY_ENV


def jit(func):
    """Compile ``func`` in nopython mode, or return None without numba."""
    if not HAVE_NUMBA:
        return None
    return numba.njit(cache=True, nogil=True)(func)


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
