"""Optional numba acceleration.

Every hot kernel in :mod:`topicast.kernels` has a numba loop version and a
vectorized numpy version computing the same quantities. The loop versions are
used when numba is importable, unless ``TOPICAST_DISABLE_NUMBA=1`` is set.
"""

import os

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False

DISABLE_FLAG = "TOPICAST_DISABLE_NUMBA"


def _flag_set() -> bool:
    return os.environ.get(DISABLE_FLAG, "").strip().lower() in ("1", "true", "yes", "on")


USE_NUMBA = HAS_NUMBA and not _flag_set()


def njit(func):
    """Compile with ``numba.njit(cache=True)``; no-op without numba."""
    if not HAS_NUMBA:
        return func
    return numba.njit(cache=True)(func)


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
