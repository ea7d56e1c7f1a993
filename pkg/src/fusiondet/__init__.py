"""fusiondet: tri-modal channel-fusion object detection.

Visible, MWIR and frame-difference motion planes stack into one BGR input;
selective-search proposals feed a from-scratch CNN with ROI pooling and twin
classification/regression heads; evaluation covers AP, top-1 and per-stage
timing across every fusion configuration, including a decision-level
combiner baseline.  A synthetic scene generator makes the whole pipeline
testable end to end on a desk-scale CPU budget.
"""

__version__ = "0.1.0"

from .boxes import BBox, Detection, GroundTruthBox, iou, nms
from .fusion import FusedImage, FusionMode, ImagePlane, compute_motion, fuse, ingest_dataset

__all__ = [
    "__version__",
    "BBox",
    "Detection",
    "GroundTruthBox",
    "iou",
    "nms",
    "FusedImage",
    "FusionMode",
    "ImagePlane",
    "compute_motion",
    "fuse",
    "ingest_dataset",
]
