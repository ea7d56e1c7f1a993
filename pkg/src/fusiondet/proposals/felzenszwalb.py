"""Graph-based initial segmentation.

Pixels are nodes of an 8-connected grid; edge weights are Euclidean color
distances on the Gaussian-smoothed planes.  Regions merge while the joining
edge is no heavier than either region's internal threshold k/|C|, then
undersized components are absorbed.  Deterministic: edges sort stably by
weight with insertion order breaking ties.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .. import kernels
from ..boxes import BBox
from ..errors import InputError

COLOR_BINS = 25  # per channel
TEXTURE_ORIENTATIONS = 8
TEXTURE_BINS = 10  # per orientation per channel


@dataclass
class Segment:
    id: int
    pixel_count: int
    bounding_box: BBox
    color_histogram: np.ndarray  # (3 * COLOR_BINS,), sums to 1
    texture_histogram: np.ndarray  # (3 * ORIENTATIONS * BINS,), sums to 1


def _grid_edges(h, w):
    """8-connectivity edge endpoints in fixed insertion order:
    right, down, down-right, down-left."""
    idx = np.arange(h * w).reshape(h, w)
    pairs = [
        (idx[:, :-1], idx[:, 1:]),
        (idx[:-1, :], idx[1:, :]),
        (idx[:-1, :-1], idx[1:, 1:]),
        (idx[:-1, 1:], idx[1:, :-1]),
    ]
    eu = np.concatenate([a.ravel() for a, _ in pairs])
    ev = np.concatenate([b.ravel() for _, b in pairs])
    return eu.astype(np.int32), ev.astype(np.int32)


def _smooth(planes, sigma):
    if sigma <= 0:
        return planes.astype(np.float64)
    return np.stack(
        [ndimage.gaussian_filter(p.astype(np.float64), sigma) for p in planes]
    )


def segment_labels(planes, k, min_size, sigma):
    """Segment a (3, H, W) array; returns (labels (H, W) with ids 0..S-1, S)."""
    if planes.ndim != 3 or planes.shape[0] != 3:
        raise InputError(f"expected (3, H, W) planes, got {planes.shape}")
    _, h, w = planes.shape
    if h * w == 0:
        raise InputError("empty image")
    if k <= 0 or min_size < 1 or sigma < 0:
        raise InputError(f"invalid segmentation config k={k} min_size={min_size} sigma={sigma}")
    smooth = _smooth(planes, sigma)
    eu, ev = _grid_edges(h, w)
    flat = smooth.reshape(3, -1)
    diff = flat[:, eu] - flat[:, ev]
    weights = np.sqrt((diff * diff).sum(axis=0))
    order = np.argsort(weights, kind="stable")
    roots = kernels.segment_graph(
        np.ascontiguousarray(eu[order]),
        np.ascontiguousarray(ev[order]),
        np.ascontiguousarray(weights[order]),
        h * w,
        float(k),
        int(min_size),
    )
    _, labels = np.unique(roots, return_inverse=True)
    return labels.reshape(h, w).astype(np.int32), int(labels.max()) + 1


def _segment_boxes(labels, count):
    slices = ndimage.find_objects(labels + 1, max_label=count)
    boxes = []
    for sl in slices:
        ys, xs = sl
        boxes.append(BBox(float(xs.start), float(ys.start),
                          float(xs.stop - xs.start), float(ys.stop - ys.start)))
    return boxes


def color_histograms(planes, labels, count):
    """(S, 75) histogram block, rows normalized to sum 1."""
    lab = labels.ravel()
    hists = np.empty((count, 3 * COLOR_BINS))
    for ch in range(3):
        bins = np.clip((planes[ch].ravel() * COLOR_BINS / 256.0).astype(np.int64), 0, COLOR_BINS - 1)
        counts = np.bincount(lab * COLOR_BINS + bins, minlength=count * COLOR_BINS)
        hists[:, ch * COLOR_BINS : (ch + 1) * COLOR_BINS] = counts.reshape(count, COLOR_BINS)
    return hists / hists.sum(axis=1, keepdims=True)


def texture_histograms(planes, labels, count):
    """Oriented-gradient histograms: 8 orientation sectors x 10 magnitude
    bins per channel, normalized to sum 1 per segment."""
    lab = labels.ravel()
    per_ch = TEXTURE_ORIENTATIONS * TEXTURE_BINS
    hists = np.empty((count, 3 * per_ch))
    for ch in range(3):
        gy, gx = np.gradient(planes[ch].astype(np.float64))
        theta = np.arctan2(gy, gx).ravel()
        obin = np.clip(((theta + np.pi) * (TEXTURE_ORIENTATIONS / (2 * np.pi))).astype(np.int64),
                       0, TEXTURE_ORIENTATIONS - 1)
        mag = np.hypot(gx, gy).ravel()
        mbin = np.clip((mag * TEXTURE_BINS / 256.0).astype(np.int64), 0, TEXTURE_BINS - 1)
        idx = lab * per_ch + obin * TEXTURE_BINS + mbin
        counts = np.bincount(idx, minlength=count * per_ch)
        hists[:, ch * per_ch : (ch + 1) * per_ch] = counts.reshape(count, per_ch)
    return hists / hists.sum(axis=1, keepdims=True)


def segments_from_labels(planes, labels, count):
    sizes = np.bincount(labels.ravel(), minlength=count)
    boxes = _segment_boxes(labels, count)
    color = color_histograms(planes, labels, count)
    texture = texture_histograms(planes, labels, count)
    return [
        Segment(
            id=i,
            pixel_count=int(sizes[i]),
            bounding_box=boxes[i],
            color_histogram=color[i],
            texture_histogram=texture[i],
        )
        for i in range(count)
    ]


def felzenszwalb_segment(image, k=100.0, min_size=50, sigma=0.8):
    """Partition a fused image into initial segments with descriptors."""
    planes = image.as_array() if hasattr(image, "as_array") else np.asarray(image)
    labels, count = segment_labels(planes, k, min_size, sigma)
    return segments_from_labels(planes, labels, count)


def segment_adjacency(labels):
    """Set of (a, b) label pairs (a < b) that touch under 8-connectivity."""
    pairs = []
    for a, b in (
        (labels[:, :-1], labels[:, 1:]),
        (labels[:-1, :], labels[1:, :]),
        (labels[:-1, :-1], labels[1:, 1:]),
        (labels[:-1, 1:], labels[1:, :-1]),
    ):
        mask = a != b
        lo = np.minimum(a[mask], b[mask])
        hi = np.maximum(a[mask], b[mask])
        pairs.append(np.stack([lo, hi], axis=1))
    if not pairs:
        return set()
    allp = np.unique(np.concatenate(pairs), axis=0)
    return {(int(a), int(b)) for a, b in allp}
