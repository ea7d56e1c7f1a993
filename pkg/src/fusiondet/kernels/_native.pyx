# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels. Semantics (tie-breaking, scan order, arithmetic) must
match fusiondet.kernels.numpy_backend exactly; the parity tests enforce it."""

import numpy as np

cimport cython
cimport numpy as cnp
from cython cimport floating

cnp.import_array()


def im2col(floating[:, :, :, ::1] x, int kh, int kw, int sh, int sw):
    cdef int n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef int oh = (h - kh) // sh + 1
    cdef int ow = (w - kw) // sw + 1
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.empty((n, c * kh * kw, oh * ow), dtype=dtype)
    cdef floating[:, :, ::1] out = out_arr
    cdef int ni, ci, i, j, oy, ox, row
    with nogil:
        for ni in range(n):
            for ci in range(c):
                for i in range(kh):
                    for j in range(kw):
                        row = (ci * kh + i) * kw + j
                        for oy in range(oh):
                            for ox in range(ow):
                                out[ni, row, oy * ow + ox] = x[ni, ci, oy * sh + i, ox * sw + j]
    return out_arr


def col2im(floating[:, :, ::1] cols, int h, int w, int kh, int kw, int sh, int sw):
    cdef int n = cols.shape[0]
    cdef int c = cols.shape[1] // (kh * kw)
    cdef int oh = (h - kh) // sh + 1
    cdef int ow = (w - kw) // sw + 1
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.zeros((n, c, h, w), dtype=dtype)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef int ni, ci, i, j, oy, ox, row
    with nogil:
        for ni in range(n):
            for ci in range(c):
                for i in range(kh):
                    for j in range(kw):
                        row = (ci * kh + i) * kw + j
                        for oy in range(oh):
                            for ox in range(ow):
                                out[ni, ci, oy * sh + i, ox * sw + j] += cols[ni, row, oy * ow + ox]
    return out_arr


def maxpool2d_forward(floating[:, :, :, ::1] x, int kh, int kw, int sh, int sw):
    cdef int n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef int oh = (h - kh) // sh + 1
    cdef int ow = (w - kw) // sw + 1
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.empty((n, c, oh, ow), dtype=dtype)
    arg_arr = np.empty((n, c, oh, ow), dtype=np.int64)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef cnp.int64_t[:, :, :, ::1] arg = arg_arr
    cdef int ni, ci, oy, ox, i, j, hy, wx
    cdef floating best, v
    cdef cnp.int64_t besti
    with nogil:
        for ni in range(n):
            for ci in range(c):
                for oy in range(oh):
                    for ox in range(ow):
                        best = x[ni, ci, oy * sh, ox * sw]
                        besti = <cnp.int64_t>(oy * sh) * w + ox * sw
                        for i in range(kh):
                            hy = oy * sh + i
                            for j in range(kw):
                                wx = ox * sw + j
                                v = x[ni, ci, hy, wx]
                                if v > best:
                                    best = v
                                    besti = <cnp.int64_t>hy * w + wx
                        out[ni, ci, oy, ox] = best
                        arg[ni, ci, oy, ox] = besti
    return out_arr, arg_arr


def maxpool2d_backward(floating[:, :, :, ::1] grad_out, cnp.int64_t[:, :, :, ::1] argmax,
                       int h, int w):
    cdef int n = grad_out.shape[0], c = grad_out.shape[1]
    cdef int oh = grad_out.shape[2], ow = grad_out.shape[3]
    dtype = np.float32 if floating is float else np.float64
    grad_arr = np.zeros((n, c, h, w), dtype=dtype)
    cdef floating[:, :, :, ::1] grad = grad_arr
    cdef int ni, ci, oy, ox
    cdef cnp.int64_t a
    with nogil:
        for ni in range(n):
            for ci in range(c):
                for oy in range(oh):
                    for ox in range(ow):
                        a = argmax[ni, ci, oy, ox]
                        grad[ni, ci, <int>(a // w), <int>(a % w)] += grad_out[ni, ci, oy, ox]
    return grad_arr


cdef extern from "math.h" nogil:
    double floor(double)


cdef inline int _round_half_up(double v) noexcept nogil:
    return <int>floor(v + 0.5)


cdef inline int _span_lo(double v, double scale, int limit) noexcept nogil:
    cdef int a = _round_half_up(v * scale)
    if a < 0:
        a = 0
    if a > limit - 1:
        a = limit - 1
    return a


def roi_pool_forward(floating[:, :, ::1] feat, double[:, ::1] rois,
                     int bins_h, int bins_w, double spatial_scale):
    cdef int c = feat.shape[0], h = feat.shape[1], w = feat.shape[2]
    cdef int r = rois.shape[0]
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.zeros((r, c, bins_h, bins_w), dtype=dtype)
    arg_arr = np.full((r, c, bins_h, bins_w), -1, dtype=np.int64)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef cnp.int64_t[:, :, :, ::1] arg = arg_arr
    cdef int ri, ci, by, bx, x1, x2, y1, y2, rw, rh, hs, he, ws, we, hy, wx
    cdef floating best, v
    cdef cnp.int64_t besti
    with nogil:
        for ri in range(r):
            x1 = _span_lo(rois[ri, 0], spatial_scale, w)
            x2 = _round_half_up((rois[ri, 0] + rois[ri, 2]) * spatial_scale)
            if x2 < x1 + 1:
                x2 = x1 + 1
            if x2 > w:
                x2 = w
            y1 = _span_lo(rois[ri, 1], spatial_scale, h)
            y2 = _round_half_up((rois[ri, 1] + rois[ri, 3]) * spatial_scale)
            if y2 < y1 + 1:
                y2 = y1 + 1
            if y2 > h:
                y2 = h
            rw = x2 - x1
            rh = y2 - y1
            for by in range(bins_h):
                hs = y1 + (by * rh) // bins_h
                he = y1 + ((by + 1) * rh + bins_h - 1) // bins_h
                if he <= hs:
                    continue
                for bx in range(bins_w):
                    ws = x1 + (bx * rw) // bins_w
                    we = x1 + ((bx + 1) * rw + bins_w - 1) // bins_w
                    if we <= ws:
                        continue
                    for ci in range(c):
                        best = feat[ci, hs, ws]
                        besti = <cnp.int64_t>hs * w + ws
                        for hy in range(hs, he):
                            for wx in range(ws, we):
                                v = feat[ci, hy, wx]
                                if v > best:
                                    best = v
                                    besti = <cnp.int64_t>hy * w + wx
                        out[ri, ci, by, bx] = best
                        arg[ri, ci, by, bx] = besti
    return out_arr, arg_arr


def roi_pool_backward(floating[:, :, :, ::1] grad_out, cnp.int64_t[:, :, :, ::1] argmax,
                      int c, int h, int w):
    dtype = np.float32 if floating is float else np.float64
    grad_arr = np.zeros((c, h, w), dtype=dtype)
    cdef floating[:, :, ::1] grad = grad_arr
    cdef int r = grad_out.shape[0], bins_h = grad_out.shape[2], bins_w = grad_out.shape[3]
    cdef int ri, ci, by, bx
    cdef cnp.int64_t a
    with nogil:
        for ri in range(r):
            for ci in range(c):
                for by in range(bins_h):
                    for bx in range(bins_w):
                        a = argmax[ri, ci, by, bx]
                        if a >= 0:
                            grad[ci, <int>(a // w), <int>(a % w)] += grad_out[ri, ci, by, bx]
    return grad_arr


def segment_graph(cnp.int32_t[::1] eu, cnp.int32_t[::1] ev, double[::1] ew,
                  int n_vertices, double k, int min_size):
    cdef cnp.int32_t[::1] parent = np.arange(n_vertices, dtype=np.int32)
    cdef cnp.int32_t[::1] rank = np.zeros(n_vertices, dtype=np.int32)
    cdef cnp.int32_t[::1] size = np.ones(n_vertices, dtype=np.int32)
    thr_arr = np.full(n_vertices, k, dtype=np.float64)
    cdef double[::1] threshold = thr_arr
    cdef Py_ssize_t m = ew.shape[0]
    cdef Py_ssize_t i
    cdef int a, b, root, v
    cdef double wgt
    labels_arr = np.empty(n_vertices, dtype=np.int32)
    cdef cnp.int32_t[::1] labels = labels_arr
    with nogil:
        for i in range(m):
            a = _find(parent, eu[i])
            b = _find(parent, ev[i])
            if a == b:
                continue
            wgt = ew[i]
            if wgt <= threshold[a] and wgt <= threshold[b]:
                root = _join(parent, rank, size, a, b)
                threshold[root] = wgt + k / size[root]
        for i in range(m):
            a = _find(parent, eu[i])
            b = _find(parent, ev[i])
            if a != b and (size[a] < min_size or size[b] < min_size):
                _join(parent, rank, size, a, b)
        for v in range(n_vertices):
            labels[v] = _find(parent, v)
    return labels_arr


cdef inline int _find(cnp.int32_t[::1] parent, int x) noexcept nogil:
    cdef int root = x
    cdef int nxt
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


cdef inline int _join(cnp.int32_t[::1] parent, cnp.int32_t[::1] rank,
                      cnp.int32_t[::1] size, int x, int y) noexcept nogil:
    if rank[x] > rank[y]:
        parent[y] = x
        size[x] += size[y]
        return x
    parent[x] = y
    size[y] += size[x]
    if rank[x] == rank[y]:
        rank[y] += 1
    return y
