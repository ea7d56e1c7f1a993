"""Axis-aligned boxes and the geometry shared by proposals, training and eval.

A box is (x, y, w, h) with the top-left corner at (x, y) and area w*h; it
covers the half-open region [x, x+w) x [y, y+h).  On integer boxes this
matches counting pixels, which is what the evaluation oracle does.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class BBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise InputError(f"box extents must be positive, got w={self.w} h={self.h}")

    @property
    def cx(self):
        return self.x + self.w / 2.0

    @property
    def cy(self):
        return self.y + self.h / 2.0

    @property
    def area(self):
        return self.w * self.h

    def as_xyxy(self):
        return (self.x, self.y, self.x + self.w, self.y + self.h)


@dataclass(frozen=True)
class Detection:
    box: BBox
    score: float
    class_id: int = 1


@dataclass(frozen=True)
class GroundTruthBox:
    box: BBox
    class_id: int
    image_id: str


def iou(a: BBox, b: BBox) -> float:
    """Intersection area over union area, in [0, 1]."""
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def iou_matrix(boxes_a, boxes_b) -> np.ndarray:
    """Pairwise IoU for two box lists, shape (len(a), len(b))."""
    if not boxes_a or not boxes_b:
        return np.zeros((len(boxes_a), len(boxes_b)))
    a = np.array([b.as_xyxy() for b in boxes_a])
    b = np.array([b.as_xyxy() for b in boxes_b])
    ix = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    iy = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(ix, 0, None) * np.clip(iy, 0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    return inter / (area_a[:, None] + area_b[None, :] - inter)


def clip_box(box: BBox, width: float, height: float) -> BBox:
    """Clip a box to the image rectangle, keeping at least a 1-px extent."""
    x1 = min(max(box.x, 0.0), width - 1.0)
    y1 = min(max(box.y, 0.0), height - 1.0)
    x2 = min(max(box.x + box.w, x1 + 1.0), width)
    y2 = min(max(box.y + box.h, y1 + 1.0), height)
    return BBox(x1, y1, x2 - x1, y2 - y1)


def nms(detections, iou_threshold: float):
    """Greedy non-maximum suppression.

    Detections are taken in descending score order (input order breaks ties);
    a detection is dropped when its IoU with an already-kept one is >= the
    threshold, so survivors have pairwise IoU strictly below it.
    """
    order = sorted(range(len(detections)), key=lambda i: (-detections[i].score, i))
    kept = []
    kept_boxes = []
    for i in order:
        box = detections[i].box
        if all(iou(box, kb) < iou_threshold for kb in kept_boxes):
            kept.append(detections[i])
            kept_boxes.append(box)
    return kept
