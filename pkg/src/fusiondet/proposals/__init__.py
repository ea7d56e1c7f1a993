"""Class-independent region proposals: graph-based initial segmentation
followed by hierarchical similarity grouping."""

from .felzenszwalb import Segment, felzenszwalb_segment, segment_labels
from .selective_search import (
    ProposalSet,
    RegionHierarchy,
    SelectiveSearchConfig,
    merge_step,
    selective_search,
    similarity,
)

__all__ = [
    "Segment",
    "felzenszwalb_segment",
    "segment_labels",
    "ProposalSet",
    "RegionHierarchy",
    "SelectiveSearchConfig",
    "merge_step",
    "selective_search",
    "similarity",
]
