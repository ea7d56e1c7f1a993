"""Channel fusion of visible / MWIR / motion imagery.

The motion plane is the absolute difference of the current sampled frame and
the previous sampled frame.  Fusion never modifies pixel values: it only
places planes into the B/G/R channels of a three-plane image (B=visible,
G=motion, R=MWIR), so the network learns the actual fusing downstream.
"""

import csv
import enum
import os
from dataclasses import dataclass, field

import numpy as np

from .boxes import BBox, GroundTruthBox
from .errors import InputError

LUMA_WEIGHTS = (0.299, 0.587, 0.114)  # ITU-R 601


@dataclass
class ImagePlane:
    """Single-channel intensity raster; values are reals in [0, 255]."""

    values: np.ndarray  # (height, width) float32

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise InputError(f"image plane must be 2-D, got shape {self.values.shape}")

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]


@dataclass
class MotionImage:
    base: ImagePlane
    from_frame: int = -1
    to_frame: int = 0


@dataclass
class FrameSequence:
    modality: str  # "visible" | "mwir"
    frames: list  # of ImagePlane
    frame_stride: int = 5

    def __post_init__(self):
        if self.frame_stride < 1:
            raise InputError("frame_stride must be >= 1")
        dims = {(f.height, f.width) for f in self.frames}
        if len(dims) > 1:
            raise InputError(f"{self.modality} frames disagree on size: {sorted(dims)}")


class FusionMode(enum.Enum):
    VISIBLE_ONLY = "visible_only"
    MWIR_ONLY = "mwir_only"
    MOTION_ONLY = "motion_only"
    VISIBLE_MWIR = "visible_mwir"
    THREE_CHANNEL = "three_channel"
    DECISION_LEVEL = "decision_level"


PIXEL_MODES = (
    FusionMode.VISIBLE_ONLY,
    FusionMode.MWIR_ONLY,
    FusionMode.MOTION_ONLY,
    FusionMode.VISIBLE_MWIR,
    FusionMode.THREE_CHANNEL,
)

# Single-modality networks backing the decision-level combiner.
DECISION_COMPONENT_MODES = (
    FusionMode.VISIBLE_ONLY,
    FusionMode.MWIR_ONLY,
    FusionMode.MOTION_ONLY,
)


@dataclass
class FusedImage:
    """Three stacked planes in B, G, R channel order."""

    planes: tuple  # (b, g, r) ImagePlane
    mode: FusionMode
    source_frame_index: int = 0
    image_id: str = ""

    def __post_init__(self):
        if len(self.planes) != 3:
            raise InputError("fused image needs exactly 3 planes")
        dims = {(p.height, p.width) for p in self.planes}
        if len(dims) > 1:
            raise InputError(f"fused planes disagree on size: {sorted(dims)}")

    @property
    def height(self):
        return self.planes[0].height

    @property
    def width(self):
        return self.planes[0].width

    def as_array(self):
        """(3, H, W) float32 in B, G, R order."""
        return np.stack([p.values for p in self.planes])


def luma(rgb):
    """Collapse an (H, W, 3) RGB array to a single luma plane."""
    r, g, b = LUMA_WEIGHTS
    return ImagePlane(rgb[..., 0] * r + rgb[..., 1] * g + rgb[..., 2] * b)


def network_input_scale(width, height, target=600, cap=1000):
    """Scale factor bringing the shortest side to `target`, capped so the
    longest side stays within `cap`."""
    short, long_ = min(width, height), max(width, height)
    scale = target / short
    if long_ * scale > cap:
        scale = cap / long_
    return scale


def resize_plane(plane: ImagePlane, scale) -> ImagePlane:
    """Bilinear resize by a uniform scale factor."""
    from scipy import ndimage

    if scale == 1.0:
        return ImagePlane(plane.values.copy())
    resized = ndimage.zoom(plane.values.astype(np.float64), scale, order=1)
    return ImagePlane(np.clip(resized, 0.0, 255.0))


def resize_fused(image: FusedImage, target=600, cap=1000):
    """Resize a fused image for the network; returns (resized, scale).

    Boxes produced on the resized image divide by `scale` to return to the
    original frame; proposals computed on the original multiply by it.
    """
    scale = network_input_scale(image.width, image.height, target=target, cap=cap)
    planes = tuple(resize_plane(p, scale) for p in image.planes)
    return (
        FusedImage(planes=planes, mode=image.mode,
                   source_frame_index=image.source_frame_index,
                   image_id=image.image_id),
        scale,
    )


def compute_motion(current: ImagePlane, previous: ImagePlane) -> MotionImage:
    """Per-pixel absolute frame difference |current - previous|."""
    if (current.height, current.width) != (previous.height, previous.width):
        raise InputError(
            f"motion frames disagree: {current.values.shape} vs {previous.values.shape}"
        )
    return MotionImage(base=ImagePlane(np.abs(current.values - previous.values)))


def fuse(visible=None, mwir=None, motion=None, mode=FusionMode.THREE_CHANNEL,
         source_frame_index=0, image_id="") -> FusedImage:
    """Assemble the network input for one fusion configuration.

    three_channel puts (B, G, R) = (visible, motion, MWIR); single-modality
    modes replicate their plane into all three channels; visible_mwir keeps
    visible in B and G with MWIR in R.  Pixel values are copied unmodified.
    """
    def need(plane, name):
        if plane is None:
            raise InputError(f"fusion mode {mode.value} requires a {name} plane")
        return plane.base if isinstance(plane, MotionImage) else plane

    if mode == FusionMode.THREE_CHANNEL:
        planes = (need(visible, "visible"), need(motion, "motion"), need(mwir, "mwir"))
    elif mode == FusionMode.VISIBLE_ONLY:
        v = need(visible, "visible")
        planes = (v, v, v)
    elif mode == FusionMode.MWIR_ONLY:
        m = need(mwir, "mwir")
        planes = (m, m, m)
    elif mode == FusionMode.MOTION_ONLY:
        m = need(motion, "motion")
        planes = (m, m, m)
    elif mode == FusionMode.VISIBLE_MWIR:
        v = need(visible, "visible")
        planes = (v, v, need(mwir, "mwir"))
    else:
        raise InputError(f"mode {mode.value} is not a pixel-level fusion mode")
    return FusedImage(planes=planes, mode=mode,
                      source_frame_index=source_frame_index, image_id=image_id)


# -- dataset ingestion ---------------------------------------------------------


@dataclass
class Sample:
    """One temporally aligned record: planes for every modality plus truth."""

    image_id: str
    sequence: str
    frame_index: int
    visible: ImagePlane
    mwir: ImagePlane
    motion: MotionImage
    ground_truth: list = field(default_factory=list)

    def fused(self, mode: FusionMode) -> FusedImage:
        return fuse(visible=self.visible, mwir=self.mwir, motion=self.motion, mode=mode,
                    source_frame_index=self.frame_index, image_id=self.image_id)


@dataclass
class Dataset:
    root: str
    train: list  # of Sample
    test: list  # of Sample

    def split(self, name):
        if name == "train":
            return self.train
        if name == "test":
            return self.test
        raise InputError(f"unknown split {name!r}")


def load_plane(path) -> ImagePlane:
    from PIL import Image

    try:
        with Image.open(path) as img:
            arr = np.asarray(img)
    except (OSError, ValueError) as exc:
        raise InputError(f"unreadable image {path}: {exc}") from exc
    if arr.ndim == 3:
        return luma(arr.astype(np.float32))
    return ImagePlane(arr.astype(np.float32))


def save_plane(plane: ImagePlane, path):
    from PIL import Image

    arr = np.clip(np.rint(plane.values), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path)


def _read_gt_csv(path):
    """gt.csv rows: frame_index,x,y,w,h,class"""
    by_frame = {}
    try:
        with open(path, newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), 1):
                if not row or row[0].startswith("#"):
                    continue
                if len(row) != 6:
                    raise InputError(f"{path}:{lineno}: expected 6 columns, got {len(row)}")
                frame = int(row[0])
                box = BBox(float(row[1]), float(row[2]), float(row[3]), float(row[4]))
                by_frame.setdefault(frame, []).append((box, int(row[5])))
    except OSError as exc:
        raise InputError(f"cannot read ground truth {path}: {exc}") from exc
    return by_frame


def read_manifest(root):
    """manifest.txt lines: `<sequence-dir> <train|test>`."""
    path = os.path.join(root, "manifest.txt")
    entries = []
    try:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                parts = line.split()
                if len(parts) != 2 or parts[1] not in ("train", "test"):
                    raise InputError(f"{path}:{lineno}: expected `<sequence> <train|test>`")
                entries.append((parts[0], parts[1]))
    except OSError as exc:
        raise InputError(f"cannot read manifest {path}: {exc}") from exc
    return entries


def _sequence_frames(seq_dir, modality):
    mod_dir = os.path.join(seq_dir, modality)
    if not os.path.isdir(mod_dir):
        raise InputError(f"missing modality directory {mod_dir}")
    names = sorted(n for n in os.listdir(mod_dir) if n.endswith(".png"))
    return [os.path.join(mod_dir, n) for n in names]


def load_sequence_samples(root, sequence):
    """All samples of one sequence; the first frame has no predecessor for
    the motion plane and is skipped rather than given fabricated zero motion."""
    seq_dir = os.path.join(root, sequence)
    vis_paths = _sequence_frames(seq_dir, "visible")
    mwir_paths = _sequence_frames(seq_dir, "mwir")
    if len(vis_paths) != len(mwir_paths):
        raise InputError(
            f"{sequence}: visible has {len(vis_paths)} frames, mwir has {len(mwir_paths)}"
        )
    gt = _read_gt_csv(os.path.join(seq_dir, "gt.csv"))
    samples = []
    prev_visible = None
    for idx, (vp, mp) in enumerate(zip(vis_paths, mwir_paths)):
        visible = load_plane(vp)
        if prev_visible is not None:
            mwir = load_plane(mp)
            if (visible.height, visible.width) != (mwir.height, mwir.width):
                raise InputError(f"{sequence} frame {idx}: visible/mwir size mismatch")
            motion = compute_motion(visible, prev_visible)
            motion.from_frame = idx - 1
            motion.to_frame = idx
            image_id = f"{sequence}/{idx:06d}"
            boxes = [
                GroundTruthBox(box=b, class_id=c, image_id=image_id)
                for b, c in gt.get(idx, [])
            ]
            samples.append(
                Sample(
                    image_id=image_id,
                    sequence=sequence,
                    frame_index=idx,
                    visible=visible,
                    mwir=mwir,
                    motion=motion,
                    ground_truth=boxes,
                )
            )
        prev_visible = visible
    return samples


def ingest_dataset(root, manifest=None) -> Dataset:
    """Load every sequence named by the manifest into aligned samples."""
    entries = manifest if manifest is not None else read_manifest(root)
    train, test = [], []
    for sequence, split in entries:
        samples = load_sequence_samples(root, sequence)
        (train if split == "train" else test).extend(samples)
    return Dataset(root=root, train=train, test=test)
