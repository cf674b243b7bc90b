"""JIT switch for the hot kernels.

Kernels are compiled with numba when it is importable and the environment
variable ``INFOSEEK_DISABLE_JIT`` is unset (or ``0``). Otherwise every kernel
falls back to a vectorised numpy implementation with identical results.
"""
import os

_FLAG = os.environ.get("INFOSEEK_DISABLE_JIT", "0").strip().lower()

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False

JIT_ENABLED = HAS_NUMBA and _FLAG in ("", "0", "false", "no")


def njit(func):
    """Compile ``func`` with numba (cached) or return it untouched."""
    if HAS_NUMBA:
        return numba.njit(cache=True)(func)
    return func


def pick(jitted, fallback):
    """Return the kernel implementation selected by the environment flag."""
    return jitted if JIT_ENABLED else fallback
