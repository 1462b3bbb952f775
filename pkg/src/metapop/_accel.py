"""Optional numba acceleration.

Set ``METAPOP_DISABLE_NUMBA=1`` to force the pure-numpy kernels.  The flag is
read once at import time.
"""
import os

_DISABLED = os.environ.get("METAPOP_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _njit = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _DISABLED


def njit(fn):
    """Compile ``fn`` with numba when available, otherwise return it untouched."""
    if _njit is None:
        return fn
    return _njit(cache=True, nogil=True)(fn)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
