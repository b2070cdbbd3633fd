"""Numba/numpy backend selection for the hot matching kernels.

Set ``DIESTUDY_NUMBA=0`` to force the pure-numpy fallback kernels.  Both
backends are bit-for-bit equivalent (integer arithmetic throughout), so the
flag only changes speed, never results.
"""

import os


def _want_numba() -> bool:
    flag = os.environ.get("DIESTUDY_NUMBA", "").strip().lower()
    if flag in {"0", "false", "off", "no"}:
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        if flag in {"1", "true", "on", "yes"}:
            raise
        return False
    return True


NUMBA_ENABLED = _want_numba()


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"
