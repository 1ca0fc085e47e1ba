"""Backend selection for the hot loops.

The compiled ``_kernels`` extension is used when importable; otherwise the
numpy twins in ``_fallback`` take over. Set ``CASCADE_MVS_PURE=1`` to force
the fallback.
"""

from __future__ import annotations

import logging
import os

from . import _fallback

logger = logging.getLogger(__name__)

BACKEND = "numpy"
_impl = _fallback

if os.environ.get("CASCADE_MVS_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        logger.debug("compiled kernels unavailable; using numpy fallback")
    else:
        _impl = _compiled
        BACKEND = "cython"


def gather_bilinear(img, xs, ys):
    return _impl.gather_bilinear(img, xs, ys)


def gather_bilinear_grad(img, xs, ys):
    return _impl.gather_bilinear_grad(img, xs, ys)


def grid_nearest(pts, cell_start, dims, origin, h, queries):
    return _impl.grid_nearest(pts, cell_start, dims, origin, h, queries)


def backends() -> dict:
    """Both implementations keyed by name (compiled one only if built)."""
    out = {"numpy": _fallback}
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        out["cython"] = _compiled
    return out
