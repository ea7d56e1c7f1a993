"""End-to-end inference: proposals -> features -> heads -> decoded, clipped,
score-filtered, NMS-pruned detections sorted by descending score."""

from dataclasses import dataclass

import numpy as np

from ..boxes import BBox, Detection, clip_box, nms
from ..errors import ConfigurationError
from ..fusion import FusionMode
from ..proposals import SelectiveSearchConfig, selective_search
from .targets import decode_deltas_array


@dataclass
class DetectConfig:
    score_threshold: float = 0.05
    nms_iou: float = 0.3
    search: SelectiveSearchConfig = None

    def __post_init__(self):
        if self.search is None:
            self.search = SelectiveSearchConfig()


def detect_on_proposals(network, fused_array, proposals, config: DetectConfig):
    """Score given proposal boxes on one fused image array (3, H, W)."""
    if not proposals:
        return []
    h, w = fused_array.shape[1:]
    feat = network.feature_extractor(fused_array)
    rois = np.array([[b.x, b.y, b.w, b.h] for b in proposals], dtype=np.float64)
    pooled = network.roipool.forward_rois(feat, rois)
    probs, deltas = network.heads(pooled)
    if probs.shape[1] != 2:
        raise ConfigurationError(
            f"detector expects a 2-class network, got {probs.shape[1]} outputs"
        )
    scores = probs[:, 1].astype(np.float64)
    raw = deltas[:, 4:8].astype(np.float64)
    raw = raw * network.delta_std.astype(np.float64) + network.delta_mean.astype(np.float64)
    decoded = decode_deltas_array(rois, raw)
    detections = []
    for i in range(len(proposals)):
        if scores[i] > config.score_threshold:
            box = clip_box(BBox(*decoded[i]), w, h)
            detections.append(Detection(box=box, score=float(scores[i]), class_id=1))
    kept = nms(detections, config.nms_iou)
    return sorted(kept, key=lambda d: -d.score)


def detect(fused_image, network, config: DetectConfig = None):
    """Full pipeline for one FusedImage, selective-search proposals included."""
    config = config or DetectConfig()
    if fused_image.mode == FusionMode.DECISION_LEVEL:
        raise ConfigurationError("decision_level fuses detector outputs, not pixels")
    proposals = selective_search(fused_image, config.search)
    return detect_on_proposals(network, fused_image.as_array(), proposals.boxes, config)
