"""Numba switch.

Set ``GGLAB_DISABLE_NUMBA=1`` to route every hot kernel through its pure-numpy
counterpart. The flag is read once at import time.
"""

import os

DISABLE_NUMBA = os.environ.get("GGLAB_DISABLE_NUMBA", "0").lower() in ("1", "true", "yes")

try:
    if DISABLE_NUMBA:
        raise ImportError
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn


def backend() -> str:
    return "numba" if HAS_NUMBA else "numpy"
