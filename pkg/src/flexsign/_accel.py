"""Numba switch for the hot kernels.

Every accelerated kernel exists twice: a loop version compiled with
``numba.njit`` and a vectorised numpy version. Which one the package uses is
decided once, at import time:

* ``FLEXSIGN_NO_NUMBA=1`` in the environment forces the numpy path;
* a missing or broken numba install falls back to numpy silently.
"""
import os

_DISABLE = os.environ.get("FLEXSIGN_NO_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    import numba as _numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba ships with the dev environment
    _numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _DISABLE


def njit(fn):
    """Compile ``fn`` with numba when available, otherwise return it unchanged."""
    if not HAVE_NUMBA:
        return fn
    return _numba.njit(cache=True, nogil=True)(fn)


def pick(nb_impl, np_impl):
    return nb_impl if USE_NUMBA else np_impl
