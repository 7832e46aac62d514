"""Optional numba acceleration.

Kernels are written so they run unchanged as plain Python over numpy
arrays. Set ``GLUCOKIN_DISABLE_JIT=1`` to force the interpreted path
(useful for debugging, coverage, or platforms without numba).
"""
import os

_FLAG = os.environ.get("GLUCOKIN_DISABLE_JIT", "").strip().lower()
JIT_REQUESTED = _FLAG not in ("1", "true", "yes", "on")

try:
    if not JIT_REQUESTED:
        raise ImportError
    import numba as _numba
except ImportError:  # pragma: no cover - exercised via the env flag
    _numba = None

JIT_ENABLED = _numba is not None


def njit(*args, **kwargs):
    """``numba.njit`` when available and enabled, otherwise the identity."""
    if JIT_ENABLED:
        kwargs.setdefault("cache", True)
        kwargs.setdefault("nogil", True)
        return _numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrapper(f):
        return f

    return wrapper
