"""Optional numba acceleration.

Hot kernels are written once in a numba-compatible subset of Python and
compiled with ``njit`` when numba is importable.  Every kernel also has a
vectorized numpy twin.  The numpy path is selected when

* numba is not installed, or
* ``LOGSOBLAB_DISABLE_NUMBA`` is set to anything other than ``""``/``"0"``, or
* numba's own ``NUMBA_DISABLE_JIT`` is active.
"""
import os

try:
    import numba
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAVE_NUMBA = False


def _flag_disabled() -> bool:
    return os.environ.get("LOGSOBLAB_DISABLE_NUMBA", "0") not in ("", "0")


def numba_enabled() -> bool:
    if not HAVE_NUMBA or _flag_disabled():
        return False
    return not numba.config.DISABLE_JIT


USE_NUMBA = numba_enabled()


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if HAVE_NUMBA:
        return _njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


def default_backend() -> str:
    return "numba" if numba_enabled() else "numpy"
