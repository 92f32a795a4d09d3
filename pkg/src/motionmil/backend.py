"""Kernel backend selection.

The hot numeric kernels in :mod:`motionmil.kernels` exist twice: a numba
``@njit`` version and a vectorized pure-numpy version. The active backend is
chosen once at import time from the ``MOTIONMIL_BACKEND`` environment
variable:

* ``auto`` (default) — numba when importable, numpy otherwise
* ``numba``          — require numba, fail loudly if missing
* ``numpy``          — force the pure-numpy fallback

Both paths compute the same quantities; ``benchmarks/bench_backends.py``
compares their outputs and speed.
"""

import os

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - environment dependent
    HAVE_NUMBA = False

_requested = os.environ.get("MOTIONMIL_BACKEND", "auto").strip().lower()
if _requested not in ("auto", "numba", "numpy"):
    raise RuntimeError(
        f"MOTIONMIL_BACKEND must be 'auto', 'numba' or 'numpy', got {_requested!r}"
    )
if _requested == "numba" and not HAVE_NUMBA:
    raise RuntimeError("MOTIONMIL_BACKEND=numba but numba is not importable")

USE_NUMBA = HAVE_NUMBA if _requested == "auto" else (_requested == "numba")


def active_backend() -> str:
    """Name of the kernel backend selected at import time."""
    return "numba" if USE_NUMBA else "numpy"
