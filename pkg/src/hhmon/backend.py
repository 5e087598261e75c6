"""Kernel backend selection.

The flow solver's inner loop exists twice: a compiled extension built from
Cython sources and a pure numpy fallback with identical semantics.  The
compiled one wins when present; set HHMON_PURE_PY=1 to force the fallback.
"""

from __future__ import annotations

import os

if os.environ.get("HHMON_PURE_PY", "0") not in ("", "0"):
    from . import _purekernels as kernels

    BACKEND = "pure"
else:
    try:
        from ._accel import kernels  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        from . import _purekernels as kernels  # type: ignore[no-redef]

        BACKEND = "pure"

warp_bilinear = kernels.warp_bilinear
tvl1_iterations = kernels.tvl1_iterations
