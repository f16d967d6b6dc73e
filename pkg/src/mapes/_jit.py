"""Backend selection for the hot kernels.

Set ``MAPES_KERNELS=numpy`` to force the pure-numpy path; the default is
``numba`` when it imports, else ``numpy``.
"""
import os
import warnings

_requested = os.environ.get("MAPES_KERNELS", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    warnings.warn(f"unknown MAPES_KERNELS={_requested!r}; using numpy kernels")
    _requested = "numpy"

HAVE_NUMBA = False
if _requested == "numba":
    try:
        import numba  # noqa: F401

        HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a hard dependency in CI
        warnings.warn("numba is not available; falling back to numpy kernels")

BACKEND = "numba" if HAVE_NUMBA else "numpy"

_NJIT_KW = {"cache": True, "nogil": True}


def njit(fn):
    """``numba.njit`` with the project defaults, or the identity without numba."""
    try:
        import numba
    except ImportError:  # pragma: no cover
        return fn
    return numba.njit(**_NJIT_KW)(fn)
