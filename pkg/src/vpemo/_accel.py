"""Numba switch.

Set ``VPEMO_DISABLE_NUMBA=1`` to force the pure-numpy kernels. When numba is
not importable the numpy kernels are used regardless.
"""
from __future__ import annotations

import os

try:
    import numba  # noqa: F401
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn


_FALSY = {"", "0", "false", "no", "off"}


def numba_requested() -> bool:
    return os.environ.get("VPEMO_DISABLE_NUMBA", "0").strip().lower() in _FALSY


USE_NUMBA = HAVE_NUMBA and numba_requested()

__all__ = ["HAVE_NUMBA", "USE_NUMBA", "njit", "numba_requested"]
