"""Hierarchical region grouping on top of the graph-based segmentation.

Adjacent regions merge most-similar-first (color + texture + size + fill
similarity, unit weights) until one region covers the image; candidate boxes
are collected from every level of the hierarchy, so proposals come out at
all scales with far fewer windows than exhaustive search.
"""

import heapq
from dataclasses import dataclass, field

import numpy as np

from ..boxes import BBox
from ..errors import InputError, InternalError
from .felzenszwalb import Segment, segment_adjacency, segment_labels, segments_from_labels


@dataclass
class SelectiveSearchConfig:
    ks: tuple = (100.0,)
    sigma: float = 0.8
    min_size: int = 50


@dataclass
class ProposalSet:
    boxes: list  # of BBox
    source_image_dims: tuple  # (width, height)

    def __post_init__(self):
        w, h = self.source_image_dims
        for b in self.boxes:
            if b.x < 0 or b.y < 0 or b.x + b.w > w or b.y + b.h > h:
                raise InputError(f"proposal {b} outside {w}x{h} image")

    def __len__(self):
        return len(self.boxes)


def _merged_box(a: BBox, b: BBox) -> BBox:
    x1 = min(a.x, b.x)
    y1 = min(a.y, b.y)
    x2 = max(a.x + a.w, b.x + b.w)
    y2 = max(a.y + a.h, b.y + b.h)
    return BBox(x1, y1, x2 - x1, y2 - y1)


def similarity(a: Segment, b: Segment, image_size: int) -> float:
    """Sum of color, texture, size and fill terms, each in [0, 1]."""
    s_color = float(np.minimum(a.color_histogram, b.color_histogram).sum())
    s_texture = float(np.minimum(a.texture_histogram, b.texture_histogram).sum())
    s_size = 1.0 - (a.pixel_count + b.pixel_count) / image_size
    bb = _merged_box(a.bounding_box, b.bounding_box)
    s_fill = 1.0 - (bb.area - a.pixel_count - b.pixel_count) / image_size
    return s_color + s_texture + s_size + s_fill


def _merge_segments(a: Segment, b: Segment, new_id: int) -> Segment:
    total = a.pixel_count + b.pixel_count
    return Segment(
        id=new_id,
        pixel_count=total,
        bounding_box=_merged_box(a.bounding_box, b.bounding_box),
        color_histogram=(a.color_histogram * a.pixel_count + b.color_histogram * b.pixel_count) / total,
        texture_histogram=(a.texture_histogram * a.pixel_count + b.texture_histogram * b.pixel_count) / total,
    )


@dataclass
class RegionHierarchy:
    """Active regions plus the ordered log of merges performed so far."""

    segments: dict  # id -> Segment (all ever created)
    neighbors: dict  # id -> set of adjacent active ids
    image_size: int
    merge_log: list = field(default_factory=list)  # (a, b, new_id, similarity)
    _heap: list = field(default_factory=list)
    _next_id: int = 0

    @classmethod
    def from_segments(cls, segments, adjacency, image_size):
        hier = cls(
            segments={s.id: s for s in segments},
            neighbors={s.id: set() for s in segments},
            image_size=image_size,
            _next_id=max((s.id for s in segments), default=-1) + 1,
        )
        for a, b in adjacency:
            hier.neighbors[a].add(b)
            hier.neighbors[b].add(a)
            hier._push(a, b)
        return hier

    def _push(self, a, b):
        if b < a:
            a, b = b, a
        sim = similarity(self.segments[a], self.segments[b], self.image_size)
        heapq.heappush(self._heap, (-sim, a, b))

    @property
    def active_count(self):
        return len(self.neighbors)

    def step(self):
        """Merge the most similar adjacent pair (ties: lowest ids first)."""
        if self.active_count < 2:
            raise InternalError("merge_step needs at least two active regions")
        while self._heap:
            neg_sim, a, b = heapq.heappop(self._heap)
            if a in self.neighbors and b in self.neighbors and b in self.neighbors[a]:
                break
        else:
            raise InternalError("no adjacent region pairs left to merge")
        new_id = self._next_id
        self._next_id += 1
        merged = _merge_segments(self.segments[a], self.segments[b], new_id)
        self.segments[new_id] = merged
        self.merge_log.append((a, b, new_id, -neg_sim))
        new_neighbors = (self.neighbors[a] | self.neighbors[b]) - {a, b}
        for n in (a, b):
            for other in self.neighbors[n]:
                self.neighbors[other].discard(n)
            del self.neighbors[n]
        self.neighbors[new_id] = new_neighbors
        for other in new_neighbors:
            self.neighbors[other].add(new_id)
            self._push(new_id, other)
        return merged


def merge_step(hierarchy: RegionHierarchy) -> RegionHierarchy:
    hierarchy.step()
    return hierarchy


def build_hierarchy(planes, k, min_size, sigma):
    h, w = planes.shape[1:]
    labels, count = segment_labels(planes, k, min_size, sigma)
    segments = segments_from_labels(planes, labels, count)
    adjacency = segment_adjacency(labels)
    return RegionHierarchy.from_segments(segments, adjacency, image_size=h * w)


def selective_search(image, config: SelectiveSearchConfig = None) -> ProposalSet:
    """Boxes from every level of the merge hierarchy, deduplicated."""
    config = config or SelectiveSearchConfig()
    planes = image.as_array() if hasattr(image, "as_array") else np.asarray(image)
    h, w = planes.shape[1:]
    boxes = []
    seen = set()
    for k in config.ks:
        hier = build_hierarchy(planes, k, config.min_size, config.sigma)
        regions = list(hier.segments.values())
        while hier.active_count > 1:
            regions.append(hier.step())
        for seg in regions:
            key = (seg.bounding_box.x, seg.bounding_box.y,
                   seg.bounding_box.w, seg.bounding_box.h)
            if key not in seen:
                seen.add(key)
                boxes.append(seg.bounding_box)
    return ProposalSet(boxes=boxes, source_image_dims=(w, h))
