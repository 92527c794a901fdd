"""Select jitted or pure-python kernel backends.

Set HYK_DISABLE_NUMBA=1 to force the pure numpy/python path.  Both variants
are importable side by side (``kernels(jit=False)``) so tests and the
benchmark can compare them in one process.
"""

from __future__ import annotations

import os
import types

from . import _pauli_kernels as _pk
from . import _lattice_kernels as _lk

_PAULI_ORDER = [
    "_k_int",
    "_j_unit_reg",
    "_j_unit_between",
    "_j_rho2_between",
    "_w_interp",
    "_cw_interp",
    "_rho_exit",
    "_ray_gap",
    "_sample_pair",
    "pauli_chunk",
]
_LATTICE_ORDER = [
    "near_sum_histogram",
    "near_sum_direct",
]


def numba_disabled() -> bool:
    return os.environ.get("HYK_DISABLE_NUMBA", "").strip() not in ("", "0", "false", "False")


def _jit_module(module, names):
    """Compile the named functions with shared globals so calls stay jitted."""
    from numba import njit

    shared = dict(vars(module))
    out = {}
    for name in names:
        src = getattr(module, name)
        clone = types.FunctionType(src.__code__, shared, name, src.__defaults__)
        try:
            jf = njit(cache=True, nogil=True)(clone)
        except Exception:
            jf = njit(cache=False, nogil=True)(clone)
        shared[name] = jf
        out[name] = jf
    return out


_JITTED: dict | None = None


def kernels(jit: bool | None = None) -> dict:
    """Return the kernel namespace: {'pauli_chunk': fn, 'near_sum_histogram': fn, ...}."""
    global _JITTED
    if jit is None:
        jit = not numba_disabled()
    if not jit:
        ns = {name: getattr(_pk, name) for name in _PAULI_ORDER}
        ns.update({name: getattr(_lk, name) for name in _LATTICE_ORDER})
        ns["jitted"] = False
        return ns
    if _JITTED is None:
        ns = _jit_module(_pk, _PAULI_ORDER)
        ns.update(_jit_module(_lk, _LATTICE_ORDER))
        ns["jitted"] = True
        _JITTED = ns
    return _JITTED


def default_workers() -> int:
    env = os.environ.get("HYK_THREADS", "").strip()
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)
