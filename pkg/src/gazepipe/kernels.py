"""Hot-loop kernels, compiled when available.

The Cython extension ``gazepipe._kernels`` is used if it was built; otherwise
the numpy implementations in ``gazepipe._kernels_py`` are used. Set
``GAZEPIPE_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if not os.environ.get("GAZEPIPE_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

im2col = _impl.im2col
col2im = _impl.col2im
maxpool_forward = _impl.maxpool_forward
maxpool_backward = _impl.maxpool_backward
warp_bilinear = _impl.warp_bilinear
adam_update = _impl.adam_update

__all__ = [
    "BACKEND",
    "im2col",
    "col2im",
    "maxpool_forward",
    "maxpool_backward",
    "warp_bilinear",
    "adam_update",
]
