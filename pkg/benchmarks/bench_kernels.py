#!/usr/bin/env python3
"""Time the compiled kernels against the numpy fallback.

Runs each hot kernel on realistic shapes (the small desk-scale network on a
320x240 frame, plus segmentation of a full fused image) and prints the
per-call medians and the speedup.  Exits nonzero if the compiled extension
is unavailable, since then there is nothing to compare.
"""

import sys
import time

import numpy as np

from fusiondet.kernels import numpy_backend

try:
    from fusiondet.kernels import _native as native
except ImportError:
    print("compiled kernels are not built; nothing to benchmark")
    sys.exit(1)


def median_time(fn, repeats=7):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return sorted(times)[len(times) // 2]


def bench(name, make_args, native_fn, numpy_fn):
    args = make_args()
    t_native = median_time(lambda: native_fn(*args))
    t_numpy = median_time(lambda: numpy_fn(*args))
    print(f"{name:<22}{t_native * 1e3:>12.2f}{t_numpy * 1e3:>12.2f}"
          f"{t_numpy / t_native:>9.1f}x")
    return t_native, t_numpy


def main():
    rng = np.random.default_rng(0)
    print(f"{'kernel':<22}{'native ms':>12}{'numpy ms':>12}{'speedup':>10}")
    print("-" * 56)

    x_conv = np.ascontiguousarray(rng.standard_normal((1, 16, 117, 157)).astype(np.float32))
    bench("im2col 5x5/s2", lambda: (x_conv, 5, 5, 2, 2),
          native.im2col, numpy_backend.im2col)

    cols = np.ascontiguousarray(
        rng.standard_normal((1, 16 * 25, 57 * 77)).astype(np.float32))
    bench("col2im 5x5/s2", lambda: (cols, 117, 157, 5, 5, 2, 2),
          native.col2im, numpy_backend.col2im)

    x_pool = np.ascontiguousarray(rng.standard_normal((1, 96, 117, 157)).astype(np.float32))
    bench("maxpool 3x3/s2 fwd", lambda: (x_pool, 3, 3, 2, 2),
          native.maxpool2d_forward, numpy_backend.maxpool2d_forward)

    out, argmax = native.maxpool2d_forward(x_pool, 3, 3, 2, 2)
    g = np.ascontiguousarray(rng.standard_normal(out.shape).astype(np.float32))
    bench("maxpool 3x3/s2 bwd", lambda: (g, argmax, 117, 157),
          native.maxpool2d_backward, numpy_backend.maxpool2d_backward)

    feat = np.ascontiguousarray(rng.standard_normal((64, 13, 18)).astype(np.float32))
    rois = np.ascontiguousarray(
        np.column_stack([rng.uniform(0, 200, 300), rng.uniform(0, 150, 300),
                         rng.uniform(8, 100, 300), rng.uniform(8, 80, 300)]))
    bench("roi_pool 6x6 fwd", lambda: (feat, rois, 6, 6, 1.0 / 16.0),
          native.roi_pool_forward, numpy_backend.roi_pool_forward)

    pooled, parg = native.roi_pool_forward(feat, rois, 6, 6, 1.0 / 16.0)
    pg = np.ascontiguousarray(rng.standard_normal(pooled.shape).astype(np.float32))
    bench("roi_pool 6x6 bwd", lambda: (pg, parg, 64, 13, 18),
          native.roi_pool_backward, numpy_backend.roi_pool_backward)

    # 8-connected grid graph of a 320x240 image, edges presorted by weight
    h, w = 240, 320
    from fusiondet.proposals.felzenszwalb import _grid_edges

    eu, ev = _grid_edges(h, w)
    ew = rng.random(eu.shape[0])
    order = np.argsort(ew, kind="stable")
    args = (np.ascontiguousarray(eu[order]), np.ascontiguousarray(ev[order]),
            np.ascontiguousarray(ew[order]))
    bench("segment_graph 320x240", lambda: (*args, h * w, 100.0, 50),
          native.segment_graph, numpy_backend.segment_graph)


if __name__ == "__main__":
    main()
