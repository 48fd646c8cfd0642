"""Numba switch.

Kernels in :mod:`priorlens._kernels` come in two flavours: explicit loops
compiled with numba, and vectorized numpy. Setting ``PRIORLENS_DISABLE_NUMBA=1``
(or running without numba installed) selects the numpy flavour.
"""
import os

DISABLE_ENV = "PRIORLENS_DISABLE_NUMBA"

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _env_disabled():
    return os.environ.get(DISABLE_ENV, "").strip().lower() in ("1", "true", "yes", "on")


USE_NUMBA = HAVE_NUMBA and not _env_disabled()


def njit(func):
    """Compile ``func`` in nopython mode when numba is importable."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)
