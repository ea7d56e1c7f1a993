"""Box-delta encoding between proposals and ground truth.

A delta (t_x, t_y, t_w, t_h) shifts a proposal's center by fractions of its
own extent and rescales width/height in log space; encode/decode are exact
inverses.
"""

import numpy as np

from ..boxes import BBox
from ..errors import InputError


class BBoxDelta:
    __slots__ = ("t_x", "t_y", "t_w", "t_h")

    def __init__(self, t_x, t_y, t_w, t_h):
        for v in (t_x, t_y, t_w, t_h):
            if not np.isfinite(v):
                raise InputError(f"non-finite bbox delta ({t_x}, {t_y}, {t_w}, {t_h})")
        self.t_x = float(t_x)
        self.t_y = float(t_y)
        self.t_w = float(t_w)
        self.t_h = float(t_h)

    def as_array(self):
        return np.array([self.t_x, self.t_y, self.t_w, self.t_h])

    def __repr__(self):
        return f"BBoxDelta({self.t_x:.4f}, {self.t_y:.4f}, {self.t_w:.4f}, {self.t_h:.4f})"


def encode_delta(proposal: BBox, gt: BBox) -> BBoxDelta:
    return BBoxDelta(
        (gt.cx - proposal.cx) / proposal.w,
        (gt.cy - proposal.cy) / proposal.h,
        np.log(gt.w / proposal.w),
        np.log(gt.h / proposal.h),
    )


def decode_delta(proposal: BBox, delta: BBoxDelta) -> BBox:
    cx = proposal.cx + delta.t_x * proposal.w
    cy = proposal.cy + delta.t_y * proposal.h
    w = proposal.w * np.exp(delta.t_w)
    h = proposal.h * np.exp(delta.t_h)
    w = max(w, 1.0)
    h = max(h, 1.0)
    return BBox(cx - w / 2.0, cy - h / 2.0, w, h)


def encode_deltas_array(proposals, gts):
    """Vectorized encode for (R, 4) x,y,w,h arrays -> (R, 4) deltas."""
    p = np.asarray(proposals, dtype=np.float64)
    g = np.asarray(gts, dtype=np.float64)
    pcx = p[:, 0] + p[:, 2] / 2.0
    pcy = p[:, 1] + p[:, 3] / 2.0
    gcx = g[:, 0] + g[:, 2] / 2.0
    gcy = g[:, 1] + g[:, 3] / 2.0
    return np.stack(
        [
            (gcx - pcx) / p[:, 2],
            (gcy - pcy) / p[:, 3],
            np.log(g[:, 2] / p[:, 2]),
            np.log(g[:, 3] / p[:, 3]),
        ],
        axis=1,
    )


def decode_deltas_array(proposals, deltas):
    """Vectorized decode; extents floored at one pixel."""
    p = np.asarray(proposals, dtype=np.float64)
    d = np.asarray(deltas, dtype=np.float64)
    cx = p[:, 0] + p[:, 2] / 2.0 + d[:, 0] * p[:, 2]
    cy = p[:, 1] + p[:, 3] / 2.0 + d[:, 1] * p[:, 3]
    w = np.maximum(p[:, 2] * np.exp(d[:, 2]), 1.0)
    h = np.maximum(p[:, 3] * np.exp(d[:, 3]), 1.0)
    return np.stack([cx - w / 2.0, cy - h / 2.0, w, h], axis=1)
