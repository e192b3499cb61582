"""Kernel dispatch: compiled extension when available, NumPy otherwise.

Set ``GDYN_PURE_PYTHON=1`` before import to force the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("GDYN_PURE_PYTHON", "") != "1":
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _pykernels

pair_interaction = _impl.pair_interaction
beta_kernel = _impl.beta_kernel
density_kernel = _impl.density_kernel
double_contour_kernel = _impl.double_contour_kernel

__all__ = [
    "BACKEND",
    "pair_interaction",
    "beta_kernel",
    "density_kernel",
    "double_contour_kernel",
]
