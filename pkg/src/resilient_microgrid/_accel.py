"""Optional numba acceleration.

Set ``RESILIENT_MG_DISABLE_NUMBA=1`` to force the pure-numpy path. When numba
is not importable the numpy path is used automatically.
"""

import os

_DISABLED = os.environ.get("RESILIENT_MG_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    HAVE_NUMBA = False
    _njit = None


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise a no-op decorator."""
    if HAVE_NUMBA:
        return _njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f
