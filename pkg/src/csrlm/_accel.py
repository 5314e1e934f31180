"""Backend switch for the hot loops.

Kernels are written once as plain Python over numpy arrays. When numba is
importable and ``CSRLM_DISABLE_NUMBA`` is unset (or ``0``), they are compiled
with ``numba.njit``; otherwise the very same source runs interpreted. Both
backends consume the random stream identically, so results are bitwise equal.
"""

from __future__ import annotations

import os

_FLAG = os.environ.get("CSRLM_DISABLE_NUMBA", "").strip().lower()
_DISABLED = _FLAG not in ("", "0", "false", "no")

try:
    if _DISABLED:
        raise ImportError
    import numba

    NUMBA_ENABLED = True
except ImportError:
    numba = None
    NUMBA_ENABLED = False

BACKEND = "numba" if NUMBA_ENABLED else "python"


def jit(func):
    """Compile ``func`` in nopython mode when the numba backend is active."""
    if NUMBA_ENABLED:
        return numba.njit(cache=True)(func)
    return func
