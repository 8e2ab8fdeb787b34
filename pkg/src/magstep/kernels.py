"""Backend selection for the tridiagonal kernels.

The compiled extension is used when it imports; otherwise the pure-Python
module is used. Setting ``MAGSTEP_BACKEND=python`` forces the fallback.
"""
import os

from . import _kernels_py

if os.environ.get("MAGSTEP_BACKEND", "").lower() == "python":
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = _impl.BACKEND
sturm_count = _impl.sturm_count
bisect_eigenvalue = _impl.bisect_eigenvalue
tridiag_shift_solve = _impl.tridiag_shift_solve

__all__ = ["BACKEND", "sturm_count", "bisect_eigenvalue", "tridiag_shift_solve"]
