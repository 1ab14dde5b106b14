"""Numba switch.

Set ``MIXLIMIT_DISABLE_NUMBA=1`` to route every hot kernel through its
pure-numpy implementation instead of the compiled one.
"""
import os

_flag = os.environ.get("MIXLIMIT_DISABLE_NUMBA", "").strip().lower()
USE_NUMBA = _flag not in ("1", "true", "yes", "on")

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        USE_NUMBA = False

if not USE_NUMBA:
    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn
