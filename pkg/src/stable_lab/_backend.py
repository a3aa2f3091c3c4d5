"""Kernel backend selection.

The hot loops (stencil applications, the random-matrix sweep) exist in two
implementations: numba-jitted node loops and vectorized numpy. The active
backend is chosen once at import time from the environment variable
``STABLE_LAB_BACKEND``:

* ``auto`` (default) — numba when importable, numpy otherwise;
* ``numba``          — require numba, raise if it is missing;
* ``numpy``          — force the pure-numpy path even when numba is present.

Both implementations accumulate in identical per-node order, so they agree
on the same input to the last bit (stencils) or to rounding noise (batched
reductions).
"""

import os

try:
    import numba  # noqa: F401

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

_requested = os.environ.get("STABLE_LAB_BACKEND", "auto").strip().lower()

if _requested not in ("auto", "numba", "numpy"):
    raise RuntimeError(
        "STABLE_LAB_BACKEND must be one of 'auto', 'numba', 'numpy'; "
        f"got {_requested!r}"
    )
if _requested == "numba" and not HAS_NUMBA:
    raise RuntimeError("STABLE_LAB_BACKEND=numba, but numba is not importable")

if _requested == "numpy":
    BACKEND = "numpy"
elif _requested == "numba":
    BACKEND = "numba"
else:
    BACKEND = "numba" if HAS_NUMBA else "numpy"
