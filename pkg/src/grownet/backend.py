"""Backend selection for the numerical kernels.

The hot inner loops (scalar chain sweeps, Jacobi rotations) exist in two
flavors: a numba-compiled one and a plain numpy/python one. The environment
variable GROWNET_BACKEND picks between them:

    auto   use numba when importable, numpy otherwise (default)
    numba  require numba, fail loudly if missing
    numpy  force the interpreted fallback even when numba is present

Selection happens once at import time so every module sees the same backend.
"""

import os

_choice = os.environ.get("GROWNET_BACKEND", "auto").strip().lower()
if _choice not in ("auto", "numba", "numpy"):
    raise ValueError(
        "GROWNET_BACKEND must be one of auto|numba|numpy, got %r" % _choice
    )

_has_numba = False
if _choice in ("auto", "numba"):
    try:
        from numba import njit as _njit
        _has_numba = True
    except ImportError:
        if _choice == "numba":
            raise ImportError("GROWNET_BACKEND=numba but numba is not installed")

USE_NUMBA = _has_numba


def backend_name():
    """Name of the active kernel backend: 'numba' or 'numpy'."""
    return "numba" if USE_NUMBA else "numpy"


def compile_kernel(func):
    """Compile func with numba on the numba backend, return it unchanged otherwise.

    Used for single-source kernels whose scalar-loop code runs under both
    backends; numba merely makes the loops fast.
    """
    if USE_NUMBA:
        return _njit(cache=True)(func)
    return func
