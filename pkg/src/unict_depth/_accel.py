"""Switch between numba-compiled kernels and their pure-numpy fallbacks.

The default is to use numba when it is importable.  ``UNICT_NUMBA=0`` in the
environment forces the numpy paths; :func:`set_numba` flips it at runtime
(tests use it to compare both implementations in one process).
"""

import os
import warnings

try:
    import numba
except ImportError:  # pragma: no cover - numba is optional
    numba = None

HAVE_NUMBA = numba is not None

_enabled = HAVE_NUMBA and os.environ.get("UNICT_NUMBA", "1").lower() not in (
    "0",
    "false",
    "no",
    "off",
)


def numba_enabled():
    return _enabled


def set_numba(flag):
    """Enable or disable the compiled kernels; returns the previous setting."""
    global _enabled
    prev = _enabled
    _enabled = bool(flag) and HAVE_NUMBA
    return prev


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise the identity decorator."""
    if numba is None:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    return numba.njit(*args, **kwargs)


def set_threads(n):
    """Cap worker threads for numba and BLAS; ``n=1`` is fully deterministic."""
    if n is None:
        return
    n = max(1, int(n))
    if numba is not None:
        with warnings.catch_warnings():
            # numba warns about an outdated TBB when probing threading layers
            warnings.simplefilter("ignore", numba.NumbaWarning)
            numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        return
    threadpool_limits(n)
