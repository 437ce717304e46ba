"""Selection between numba-compiled kernels and the pure-numpy fallback.

Set ``BCSA_NO_NUMBA=1`` in the environment to force the numpy path, e.g. for
debugging or on platforms without numba.
"""
import os

_DISABLED = os.environ.get("BCSA_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and not _DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise an identity decorator."""
    if HAS_NUMBA:
        return numba.njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]
    return lambda f: f
