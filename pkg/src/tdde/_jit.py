"""Numba switch.

Set ``TDDE_NUMBA=0`` to run every kernel through its pure-numpy path. The
flag is read once at import time.
"""
import os

_FLAG = os.environ.get("TDDE_NUMBA", "1").strip().lower()
# prefer OpenMP so an old system TBB is never probed
os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp workqueue tbb")

try:
    import numba
    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    _HAVE_NUMBA = False

USE_NUMBA = _HAVE_NUMBA and _FLAG not in ("0", "false", "no", "off")


def njit(func=None, **kwargs):
    """``numba.njit`` when numba is enabled, identity otherwise."""
    kwargs.setdefault("cache", True)
    if not _HAVE_NUMBA:
        if func is not None:
            return func
        return lambda f: f
    if func is not None:
        return numba.njit(**kwargs)(func)
    return numba.njit(**kwargs)


def set_threads(n):
    """Cap worker threads for numba and the BLAS pools."""
    if n is None or n < 1:
        return
    if _HAVE_NUMBA:
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        return
    threadpool_limits(n)
