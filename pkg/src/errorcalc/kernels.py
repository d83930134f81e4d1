"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when it was built; otherwise,
or when ``ERRORCALC_PURE=1`` is set, the numpy/pure-Python ``_pykernels``
are used.  Both produce identical integer results and identical floating
point results up to libm rounding in :func:`lil_max`.
"""

import os

import numpy as np

from . import _pykernels

_c = None
if os.environ.get("ERRORCALC_PURE") != "1":
    try:
        from . import _ckernels as _c
    except ImportError:  # extension not built
        _c = None

BACKEND = "cython" if _c is not None else "python"
_impl = _c if _c is not None else _pykernels


def _bits(bits):
    return np.ascontiguousarray(bits, dtype=np.uint8)


def _fsm(trans):
    return np.ascontiguousarray(trans, dtype=np.int64)


def block_counts(bits, k, impl=None):
    """Sliding-window counts of every length-``k`` block, indexed by its binary code."""
    return (impl or _impl).block_counts(_bits(bits), int(k))


def fsm_select(bits, trans, decide, initial, impl=None):
    """Mask of selected positions; the decision at ``i`` is taken before bit ``i`` is read."""
    return (impl or _impl).fsm_select(
        _bits(bits), _fsm(trans), np.ascontiguousarray(decide, dtype=np.uint8), int(initial)
    )


def fsm_bet(bits, trans, stake, predict, initial, capital, impl=None):
    return (impl or _impl).fsm_bet(
        _bits(bits),
        _fsm(trans),
        np.ascontiguousarray(stake, dtype=np.float64),
        np.ascontiguousarray(predict, dtype=np.uint8),
        int(initial),
        float(capital),
    )


def fsm_bet_batch(bits, trans, stake, predict, initial, capital, impl=None):
    """Final capital for each row of ``bits``."""
    return (impl or _impl).fsm_bet_batch(
        np.ascontiguousarray(bits, dtype=np.uint8),
        _fsm(trans),
        np.ascontiguousarray(stake, dtype=np.float64),
        np.ascontiguousarray(predict, dtype=np.uint8),
        int(initial),
        float(capital),
    )


def lil_max(bits, n0, impl=None):
    return float((impl or _impl).lil_max(_bits(bits), int(n0)))


def implementations():
    """Available backends by name, for tests and the benchmark."""
    out = {"python": _pykernels}
    if _c is not None:
        out["cython"] = _c
    return out
