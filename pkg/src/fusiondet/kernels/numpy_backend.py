"""Pure-numpy implementations of the hot kernels.

These are the reference semantics; the Cython module `_native` must match
them bit-for-bit (same tie-breaking, same scan order).  They are selected
automatically when the extension is not built, or when
FUSIONDET_PURE_PYTHON=1 is set.
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided


def im2col(x, kh, kw, sh, sw):
    """Unfold padded NCHW input into (N, C*kh*kw, OH*OW) patch columns."""
    n, c, h, w = x.shape
    oh = (h - kh) // sh + 1
    ow = (w - kw) // sw + 1
    s0, s1, s2, s3 = x.strides
    view = as_strided(
        x,
        shape=(n, c, kh, kw, oh, ow),
        strides=(s0, s1, s2, s3, s2 * sh, s3 * sw),
        writeable=False,
    )
    return view.reshape(n, c * kh * kw, oh * ow)


def col2im(cols, h, w, kh, kw, sh, sw):
    """Fold patch columns back onto a zero (N, C, h, w) canvas, summing overlaps."""
    n = cols.shape[0]
    c = cols.shape[1] // (kh * kw)
    oh = (h - kh) // sh + 1
    ow = (w - kw) // sw + 1
    out = np.zeros((n, c, h, w), dtype=cols.dtype)
    cols6 = cols.reshape(n, c, kh, kw, oh, ow)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + sh * oh : sh, j : j + sw * ow : sw] += cols6[:, :, i, j]
    return out


def maxpool2d_forward(x, kh, kw, sh, sw):
    """Max over sliding windows; returns (out, argmax) with argmax as the
    flat h*W+w index of the first maximum in row-major window order."""
    n, c, h, w = x.shape
    oh = (h - kh) // sh + 1
    ow = (w - kw) // sw + 1
    s0, s1, s2, s3 = x.strides
    win = as_strided(
        x,
        shape=(n, c, oh, ow, kh, kw),
        strides=(s0, s1, s2 * sh, s3 * sw, s2, s3),
        writeable=False,
    )
    flat = win.reshape(n, c, oh, ow, kh * kw)
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    base_h = np.arange(oh)[:, None] * sh
    base_w = np.arange(ow)[None, :] * sw
    rows = base_h + idx // kw
    colsi = base_w + idx % kw
    argmax = (rows * w + colsi).astype(np.int64)
    return np.ascontiguousarray(out), argmax


def maxpool2d_backward(grad_out, argmax, h, w):
    """Route each output gradient to the recorded argmax position."""
    n, c = grad_out.shape[:2]
    grad_in = np.zeros((n * c, h * w), dtype=grad_out.dtype)
    g = grad_out.reshape(n * c, -1)
    a = argmax.reshape(n * c, -1)
    np.add.at(grad_in, (np.arange(n * c)[:, None], a), g)
    return grad_in.reshape(n, c, h, w)


def _roi_span(lo, hi, scale, limit):
    """Scale-and-round one ROI axis to feature coordinates, clamped in-bounds.

    Rounds half up (floor(v + 0.5)) so the compiled backend can match exactly.
    """
    a = int(np.floor(lo * scale + 0.5))
    b = int(np.floor(hi * scale + 0.5))
    a = min(max(a, 0), limit - 1)
    b = min(max(b, a + 1), limit)
    return a, b


def roi_pool_forward(feat, rois, bins_h, bins_w, spatial_scale):
    """Max-pool each scaled ROI into a fixed bins_h x bins_w grid.

    feat is CHW; rois is (R, 4) float64 (x, y, w, h) in input-image
    coordinates.  Returns (out, argmax); empty bins give 0 with argmax -1.
    """
    c, h, w = feat.shape
    r = rois.shape[0]
    out = np.zeros((r, c, bins_h, bins_w), dtype=feat.dtype)
    argmax = np.full((r, c, bins_h, bins_w), -1, dtype=np.int64)
    flat = feat.reshape(c, h * w)
    for ri in range(r):
        x, y, bw_, bh_ = rois[ri]
        x1, x2 = _roi_span(x, x + bw_, spatial_scale, w)
        y1, y2 = _roi_span(y, y + bh_, spatial_scale, h)
        rw = x2 - x1
        rh = y2 - y1
        for by in range(bins_h):
            hs = y1 + (by * rh) // bins_h
            he = y1 + -((-(by + 1) * rh) // bins_h)
            if he <= hs:
                continue
            for bx in range(bins_w):
                ws = x1 + (bx * rw) // bins_w
                we = x1 + -((-(bx + 1) * rw) // bins_w)
                if we <= ws:
                    continue
                window = feat[:, hs:he, ws:we].reshape(c, -1)
                k = window.argmax(axis=1)
                out[ri, :, by, bx] = window[np.arange(c), k]
                argmax[ri, :, by, bx] = (hs + k // (we - ws)) * w + (ws + k % (we - ws))
    return out, argmax


def roi_pool_backward(grad_out, argmax, c, h, w):
    """Scatter-add pooled gradients back onto the feature map."""
    grad = np.zeros((c, h * w), dtype=grad_out.dtype)
    a = argmax.transpose(1, 0, 2, 3).reshape(c, -1)
    g = grad_out.transpose(1, 0, 2, 3).reshape(c, -1)
    mask = a >= 0
    for ci in range(c):
        np.add.at(grad[ci], a[ci][mask[ci]], g[ci][mask[ci]])
    return grad.reshape(c, h, w)


class _UnionFind:
    __slots__ = ("parent", "rank", "size")

    def __init__(self, n):
        self.parent = list(range(n))
        self.rank = [0] * n
        self.size = [1] * n

    def find(self, x):
        root = x
        parent = self.parent
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def join(self, x, y):
        if self.rank[x] > self.rank[y]:
            self.parent[y] = x
            self.size[x] += self.size[y]
            return x
        self.parent[x] = y
        self.size[y] += self.size[x]
        if self.rank[x] == self.rank[y]:
            self.rank[y] += 1
        return y


def segment_graph(eu, ev, ew, n_vertices, k, min_size):
    """Felzenszwalb-style graph segmentation over presorted edges.

    Edges must already be sorted ascending by weight (stable, so insertion
    order breaks ties).  Two regions merge while the connecting edge weight
    does not exceed either region's internal threshold k/|C|; a second pass
    absorbs components smaller than min_size.  Returns the root label of
    every vertex (not renumbered).
    """
    uf = _UnionFind(n_vertices)
    threshold = [float(k)] * n_vertices
    for i in range(len(ew)):
        a = uf.find(int(eu[i]))
        b = uf.find(int(ev[i]))
        if a == b:
            continue
        wgt = float(ew[i])
        if wgt <= threshold[a] and wgt <= threshold[b]:
            root = uf.join(a, b)
            threshold[root] = wgt + k / uf.size[root]
    for i in range(len(ew)):
        a = uf.find(int(eu[i]))
        b = uf.find(int(ev[i]))
        if a != b and (uf.size[a] < min_size or uf.size[b] < min_size):
            uf.join(a, b)
    labels = np.empty(n_vertices, dtype=np.int32)
    for v in range(n_vertices):
        labels[v] = uf.find(v)
    return labels
