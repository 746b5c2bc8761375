"""Backend selection for the numeric kernels.

The hot kernels in ``dean._kernels`` are written as plain numpy functions
and compiled with numba's ``@njit`` when available.  Setting the
environment variable ``DEAN_NUMBA=0`` (before import) forces the pure-numpy
fallback; the same source runs un-jitted, so both paths share one
implementation.  ``benchmarks/bench_backends.py`` compares the two.
"""

import os

_flag = os.environ.get("DEAN_NUMBA", "1").strip().lower()
USE_NUMBA = _flag not in ("0", "false", "off", "no")

if USE_NUMBA:
    try:
        from numba import njit as _njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USE_NUMBA = False

if USE_NUMBA:

    def jit(fn):
        """Compile a kernel. nogil so ensemble training threads overlap."""
        return _njit(cache=True, nogil=True, fastmath=False)(fn)

else:

    def jit(fn):
        """Identity decorator: run the kernel as plain numpy."""
        return fn


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
