"""Kernel backend selection.

The compiled extension is used when importable; setting the environment
variable ``PEPAFLUID_PURE_PYTHON=1`` forces the pure-Python twin.
"""

import os

from . import _pykernels

try:
    if os.environ.get("PEPAFLUID_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure Python requested")
    from . import _ckernels as _impl
    BACKEND = "cython"
except ImportError:  # extension not built or disabled
    _impl = _pykernels
    BACKEND = "python"

OK, NEGATIVE, NONFINITE = 0, 1, 2
DONE, ABSORBED, NEED_UNIFORMS, BUFFER_FULL = 0, 1, 2, 3


def backend(name=None):
    """Return a kernel module: ``"cython"``, ``"python"`` or the default."""
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")


def rate_args(t):
    """Table arrays in kernel argument order (after the state arguments)."""
    return (t.d, t.arg_ptr, t.arg_idx, t.arg_rate, t.arg_passive, t.factor,
            t.chg_ptr, t.chg_idx, t.chg_val)


def region_args(t):
    return (t.d, t.mt_ptr, t.mt_idx, t.mt_rate)
