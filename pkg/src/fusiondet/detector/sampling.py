"""ROI minibatch sampling: a fixed quota per image with a bounded foreground
fraction, IoU-thresholded labels, and ground-truth boxes injected as
foreground candidates so every image trains on at least one positive."""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..boxes import BBox, iou_matrix
from ..errors import InputError
from .targets import BBoxDelta, encode_delta

log = logging.getLogger(__name__)


@dataclass
class RoiSample:
    roi: BBox
    label: int  # 0 background, 1 target
    target_delta: Optional[BBoxDelta] = None  # present iff label == 1


@dataclass
class SamplerConfig:
    rois_per_image: int = 64
    fg_fraction: float = 0.25
    fg_iou_threshold: float = 0.5
    bg_iou_range: tuple = (0.1, 0.5)  # [low, high)

    def __post_init__(self):
        if not 0.0 < self.fg_fraction < 1.0:
            raise InputError("fg_fraction must be in (0, 1)")
        for v in (self.fg_iou_threshold, *self.bg_iou_range):
            if not 0.0 <= v <= 1.0:
                raise InputError("IoU thresholds must be in [0, 1]")


def sample_rois(proposals, gts, config: SamplerConfig, rng) -> list:
    """Draw rois_per_image labeled samples from proposals + injected gts.

    Foreground: IoU >= fg_iou_threshold with some gt (quota fg_fraction);
    background: best IoU inside bg_iou_range.  Too few backgrounds get
    padded by duplication (warned once per call).
    """
    if not gts:
        raise InputError("sample_rois needs at least one ground-truth box")
    gt_boxes = [g.box if hasattr(g, "box") else g for g in gts]
    candidates = list(proposals.boxes if hasattr(proposals, "boxes") else proposals)
    candidates.extend(gt_boxes)  # gt injection

    ious = iou_matrix(candidates, gt_boxes)
    best_gt = ious.argmax(axis=1)
    best_iou = ious[np.arange(len(candidates)), best_gt]

    fg_idx = np.flatnonzero(best_iou >= config.fg_iou_threshold)
    lo, hi = config.bg_iou_range
    bg_idx = np.flatnonzero((best_iou >= lo) & (best_iou < hi))
    if bg_idx.size == 0:
        # fall back to anything under the fg threshold before duplicating
        bg_idx = np.flatnonzero(best_iou < config.fg_iou_threshold)

    n_fg = min(int(round(config.rois_per_image * config.fg_fraction)), fg_idx.size)
    n_fg = max(n_fg, 1)  # gt injection guarantees at least one fg candidate
    n_bg = config.rois_per_image - n_fg

    fg_pick = rng.choice(fg_idx, size=min(n_fg, fg_idx.size), replace=False)
    if bg_idx.size == 0:
        # every candidate is foreground; fill the quota with duplicated fg
        log.warning("no background candidates at all; batch is foreground-only")
        extra = rng.choice(fg_idx, size=n_bg, replace=True)
        fg_pick = np.concatenate([fg_pick, extra])
        bg_pick = np.array([], dtype=int)
    elif bg_idx.size >= n_bg:
        bg_pick = rng.choice(bg_idx, size=n_bg, replace=False)
    else:
        log.warning(
            "only %d background candidates for a quota of %d; padding by duplication",
            bg_idx.size, n_bg,
        )
        bg_pick = rng.choice(bg_idx, size=n_bg, replace=True)

    samples = []
    for i in fg_pick:
        box = candidates[int(i)]
        gt = gt_boxes[int(best_gt[int(i)])]
        samples.append(RoiSample(roi=box, label=1, target_delta=encode_delta(box, gt)))
    for i in bg_pick:
        samples.append(RoiSample(roi=candidates[int(i)], label=0))
    return samples
