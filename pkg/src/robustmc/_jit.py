"""Optional numba acceleration.

Set ``ROBUSTMC_DISABLE_NUMBA=1`` to force the pure-numpy code paths, e.g. for
debugging or on platforms where numba is unavailable.
"""
import os

_disabled = os.environ.get("ROBUSTMC_DISABLE_NUMBA", "").strip().lower() in (
    "1", "true", "yes", "on")

try:
    if _disabled:
        raise ImportError
    from numba import njit
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f


def use_numba():
    """Whether the compiled kernels are active in this process."""
    return HAVE_NUMBA


__all__ = ["njit", "HAVE_NUMBA", "use_numba"]
