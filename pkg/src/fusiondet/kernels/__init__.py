"""Hot numeric kernels with a compiled fast path.

The Cython extension is preferred when built; otherwise the numpy
implementations take over with identical semantics.  Setting
FUSIONDET_PURE_PYTHON=1 forces the numpy path (used by the parity tests and
by benchmarks/bench_kernels.py, which times one backend against the other).
"""

import os

from . import numpy_backend

if os.environ.get("FUSIONDET_PURE_PYTHON"):
    _impl = numpy_backend
    BACKEND = "numpy"
else:
    try:
        from . import _native as _impl  # type: ignore[attr-defined]

        BACKEND = "native"
    except ImportError:
        _impl = numpy_backend
        BACKEND = "numpy"

# im2col stays on numpy even when the extension is built: the as_strided
# gather beats the compiled loop (see benchmarks/bench_kernels.py).
im2col = numpy_backend.im2col
col2im = _impl.col2im
maxpool2d_forward = _impl.maxpool2d_forward
maxpool2d_backward = _impl.maxpool2d_backward
roi_pool_forward = _impl.roi_pool_forward
roi_pool_backward = _impl.roi_pool_backward
segment_graph = _impl.segment_graph

__all__ = [
    "BACKEND",
    "im2col",
    "col2im",
    "maxpool2d_forward",
    "maxpool2d_backward",
    "roi_pool_forward",
    "roi_pool_backward",
    "segment_graph",
    "numpy_backend",
]
