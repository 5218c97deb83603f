"""Kernel backend selection.

Hot loops exist twice: a numba version compiled with ``@njit`` and a
vectorised pure-numpy version. The numba path is used when numba imports
and ``CONDWEIGHT_DISABLE_NUMBA`` is unset (or ``0``).
"""

import os

ENV_FLAG = "CONDWEIGHT_DISABLE_NUMBA"


def numba_requested() -> bool:
    return os.environ.get(ENV_FLAG, "0").strip().lower() in ("", "0", "false", "no")


try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and numba_requested()
