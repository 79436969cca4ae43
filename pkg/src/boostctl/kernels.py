"""Kernel dispatch: compiled Cython core when built, pure Python otherwise.

Set ``BOOSTCTL_PURE_PYTHON=1`` to force the fallback (used by the benchmark
and by the equivalence tests).
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("BOOSTCTL_PURE_PYTHON") != "1":
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

rk4_advance = _impl.rk4_advance
simulate_pi = _impl.simulate_pi
simulate_duty = _impl.simulate_duty

__all__ = ["BACKEND", "rk4_advance", "simulate_pi", "simulate_duty"]
