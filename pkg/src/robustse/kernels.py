"""Select the compiled kernels when available, else the numpy fallback.

Set ``ROBUSTSE_PURE_PYTHON=1`` to force the fallback (used by the parity
tests and the benchmark).
"""
import os

if os.environ.get("ROBUSTSE_PURE_PYTHON", "") not in ("", "0"):
    from . import _kernels_py as _impl
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        from . import _kernels_py as _impl

IMPLEMENTATION = _impl.IMPLEMENTATION
jacobi_singular_values = _impl.jacobi_singular_values
project_l1 = _impl.project_l1
admm_mixed = _impl.admm_mixed
admm_linmax = _impl.admm_linmax

__all__ = ["IMPLEMENTATION", "jacobi_singular_values", "project_l1",
           "admm_mixed", "admm_linmax"]
