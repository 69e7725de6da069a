"""Numba dispatch.

Set ``SQAGUIDE_DISABLE_NUMBA=1`` to force the pure-numpy kernels, e.g. when
debugging or when numba is unavailable on the target platform.
"""
import functools
import os

DISABLED = os.environ.get("SQAGUIDE_DISABLE_NUMBA", "0").lower() in ("1", "true", "yes")

try:
    import numba

    NUMBA_OK = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    NUMBA_OK = False

USE_NUMBA = NUMBA_OK and not DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` with ``cache=True``; identity decorator without numba."""
    kwargs.setdefault("cache", True)
    if not NUMBA_OK:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    return numba.njit(*args, **kwargs)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"


def dispatch(numba_impl, numpy_impl):
    """Pick the kernel implementation once, at import time."""
    impl = numba_impl if USE_NUMBA else numpy_impl

    @functools.wraps(numpy_impl)
    def wrapper(*args, **kwargs):
        return impl(*args, **kwargs)

    wrapper.numba_impl = numba_impl
    wrapper.numpy_impl = numpy_impl
    return wrapper
