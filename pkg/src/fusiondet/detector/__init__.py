"""Detector orchestration: delta coding, losses, ROI sampling, the training
loop and end-to-end inference."""

from ..boxes import BBox, Detection
from .inference import DetectConfig, detect, detect_on_proposals
from .losses import bbox_loss, classification_loss, joint_loss, smooth_l1
from .sampling import RoiSample, SamplerConfig, sample_rois
from .targets import (
    BBoxDelta,
    decode_delta,
    decode_deltas_array,
    encode_delta,
    encode_deltas_array,
)
from .train import TrainConfig, TrainingLog, compute_proposals, delta_normalization, train

__all__ = [
    "BBox",
    "Detection",
    "BBoxDelta",
    "encode_delta",
    "decode_delta",
    "encode_deltas_array",
    "decode_deltas_array",
    "classification_loss",
    "bbox_loss",
    "joint_loss",
    "smooth_l1",
    "RoiSample",
    "SamplerConfig",
    "sample_rois",
    "TrainConfig",
    "TrainingLog",
    "train",
    "compute_proposals",
    "delta_normalization",
    "DetectConfig",
    "detect",
    "detect_on_proposals",
]
