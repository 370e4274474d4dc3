"""Optional numba acceleration.

Kernels decorated with :func:`njit` are compiled by numba when it is importable
and ``PIKAN_DISABLE_NUMBA`` is unset (or ``0``). Otherwise the plain Python
function is returned and callers dispatch to their vectorised numpy path.
"""

from __future__ import annotations

import logging
import os
from typing import Any, Callable

_FLAG = "PIKAN_DISABLE_NUMBA"


def _numba_requested() -> bool:
    return os.environ.get(_FLAG, "0").strip().lower() in ("", "0", "false", "no")


try:
    if not _numba_requested():
        raise ImportError("numba disabled by " + _FLAG)
    import numba

    logging.getLogger("numba").setLevel(logging.WARNING)
    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False


def njit(*args: Any, **kwargs: Any) -> Callable:
    """``numba.njit`` when available, identity decorator otherwise."""
    if HAVE_NUMBA:
        return numba.njit(*args, cache=True, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


def backend() -> str:
    return "numba" if HAVE_NUMBA else "numpy"
