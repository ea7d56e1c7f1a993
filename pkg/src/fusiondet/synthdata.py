"""Deterministic synthetic tri-modal sequences with exact ground truth.

Each sequence renders a static background per modality (visible and thermal)
plus moving textured rectangular targets.  The generator reproduces the
detection-difficulty axes the pipeline must face: camouflage (low visible
contrast, strong thermal contrast), extreme scale spread (small distant
targets), hot targets and per-frame sensor noise.  Everything derives from a
single seed; sequences use independent child streams so generation order
does not matter.
"""

import os
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .boxes import BBox
from .errors import InputError
from .fusion import FrameSequence, ImagePlane, save_plane

BACKGROUND_TEXTURES = ("flat", "noise", "terrain-gradient")


@dataclass
class SceneSpec:
    image_dims: tuple = (320, 240)  # (width, height)
    background_texture: str = "terrain-gradient"
    target_count: int = 1
    target_size_range: tuple = (48, 72)  # pixels
    visible_contrast: float = 0.4  # fraction of full scale
    thermal_contrast: float = 0.5
    velocity_range: tuple = (1.0, 3.0)  # speed in pixels/frame
    frames: int = 40
    seed: int = 0
    noise_sigma: float = 4.0
    edge_blur: float = 0.5

    def __post_init__(self):
        if self.background_texture not in BACKGROUND_TEXTURES:
            raise InputError(f"unknown background texture {self.background_texture!r}")
        if not (0.0 <= self.visible_contrast <= 1.0 and 0.0 <= self.thermal_contrast <= 1.0):
            raise InputError("contrasts must lie in [0, 1]")
        w, h = self.image_dims
        if self.target_size_range[1] >= min(w, h):
            raise InputError(
                f"targets up to {self.target_size_range[1]} px do not fit in {w}x{h}"
            )
        if self.frames < 2:
            raise InputError("a sequence needs at least 2 frames")


@dataclass
class SyntheticSequence:
    visible: FrameSequence
    mwir: FrameSequence
    gt: list  # per frame: list of BBox
    spec: SceneSpec
    background_visible: np.ndarray = None
    background_mwir: np.ndarray = None


def _structured_field(rng, h, w, scales=(2, 5, 12), weights=(1.5, 1.0, 1.0)):
    """Blobby multi-scale random field, normalized to unit-ish amplitude.

    The finest scale dominates so the background segments into hundreds of
    small regions, which keeps proposal counts realistic."""
    total = np.zeros((h, w))
    for s, wt in zip(scales, weights):
        layer = ndimage.gaussian_filter(rng.standard_normal((h, w)), s)
        std = layer.std()
        if std > 0:
            total += wt * layer / std
    return total / sum(weights)


def _background(rng, spec, base, amplitude):
    w, h = spec.image_dims
    if spec.background_texture == "terrain-gradient":
        field_ = _structured_field(rng, h, w)
        ramp = np.linspace(-0.4, 0.4, h)[:, None]
        bg = base + amplitude * field_ + amplitude * ramp
    else:  # flat and noise share a constant base; noise varies per frame
        bg = np.full((h, w), float(base))
    return np.clip(bg, 10.0, 245.0)


def _target_texture(rng, h, w):
    tex = ndimage.gaussian_filter(rng.standard_normal((h, w)), 1.5)
    std = tex.std()
    return tex / std if std > 0 else tex


@dataclass
class _Target:
    size: tuple  # (w, h)
    start: tuple  # (x0, y0) float
    velocity: tuple  # (vx, vy) float px/frame
    visible_sign: float
    texture: np.ndarray

    def box_at(self, frame):
        x = int(round(self.start[0] + self.velocity[0] * frame))
        y = int(round(self.start[1] + self.velocity[1] * frame))
        return BBox(float(x), float(y), float(self.size[0]), float(self.size[1]))


def _plan_target(rng, spec):
    w, h = spec.image_dims
    lo, hi = spec.target_size_range
    tw = int(rng.integers(lo, hi + 1))
    th = int(np.clip(round(tw * rng.uniform(0.8, 1.25)), lo, hi))
    speed = rng.uniform(*spec.velocity_range)
    angle = rng.uniform(0, 2 * np.pi)
    vx, vy = speed * np.cos(angle), speed * np.sin(angle)
    span = spec.frames - 1
    # cap the velocity so a straight path fits inside the frame
    max_vx = (w - 1 - tw) / span
    max_vy = (h - 1 - th) / span
    vx = float(np.clip(vx, -max_vx, max_vx))
    vy = float(np.clip(vy, -max_vy, max_vy))
    x_lo = max(0.0, -vx * span)
    x_hi = (w - 1 - tw) - max(0.0, vx * span)
    y_lo = max(0.0, -vy * span)
    y_hi = (h - 1 - th) - max(0.0, vy * span)
    x0 = rng.uniform(x_lo, x_hi)
    y0 = rng.uniform(y_lo, y_hi)
    return _Target(
        size=(tw, th),
        start=(x0, y0),
        velocity=(vx, vy),
        visible_sign=1.0 if rng.random() < 0.5 else -1.0,
        texture=_target_texture(rng, th, tw),
    )


def _alpha_mask(spec, th, tw):
    """(th+2, tw+2) canvas: the box interior plus its 1-px blur fringe."""
    padded = np.zeros((th + 2, tw + 2))
    padded[1:-1, 1:-1] = 1.0
    if spec.edge_blur <= 0:
        return padded
    # truncate chosen so the blurred support grows by at most one pixel
    return ndimage.gaussian_filter(padded, spec.edge_blur, truncate=2.0)


def _quantize(arr):
    return np.clip(np.rint(arr), 0, 255).astype(np.float32)


def generate(spec: SceneSpec) -> SyntheticSequence:
    """Render one aligned visible/MWIR sequence with per-frame ground truth."""
    rng = np.random.default_rng(spec.seed)
    w, h = spec.image_dims
    bg_vis = _background(rng, spec, base=rng.uniform(100, 140), amplitude=55.0)
    bg_mwir = _background(rng, spec, base=rng.uniform(60, 90), amplitude=30.0)
    targets = [_plan_target(rng, spec) for _ in range(spec.target_count)]
    alphas = [_alpha_mask(spec, t.size[1], t.size[0]) for t in targets]

    per_frame_noise = spec.noise_sigma
    if spec.background_texture == "noise":
        per_frame_noise = max(per_frame_noise, 4.0)

    vis_frames, mwir_frames, gt = [], [], []
    for f in range(spec.frames):
        vis = bg_vis.copy()
        mwir = bg_mwir.copy()
        boxes = []
        for t, alpha in zip(targets, alphas):
            box = t.box_at(f)
            boxes.append(box)
            x, y = int(box.x), int(box.y)
            tw, th = t.size
            vis_offset = t.visible_sign * spec.visible_contrast * 255.0
            mwir_offset = spec.thermal_contrast * 255.0
            vis_patch = alpha[1:-1, 1:-1] * (vis_offset + 0.15 * vis_offset * t.texture)
            mwir_patch = alpha[1:-1, 1:-1] * (mwir_offset + 0.1 * mwir_offset * t.texture)
            ys = slice(y, y + th)
            xs = slice(x, x + tw)
            vis[ys, xs] += vis_patch
            mwir[ys, xs] += mwir_patch
            # blurred 1-px fringe around the box
            _add_fringe(vis, alpha, x, y, tw, th, vis_offset)
            _add_fringe(mwir, alpha, x, y, tw, th, mwir_offset)
        if per_frame_noise > 0:
            vis = vis + rng.normal(0.0, per_frame_noise, vis.shape)
            mwir = mwir + rng.normal(0.0, per_frame_noise, mwir.shape)
        vis_frames.append(ImagePlane(_quantize(vis)))
        mwir_frames.append(ImagePlane(_quantize(mwir)))
        gt.append(boxes)
    return SyntheticSequence(
        visible=FrameSequence(modality="visible", frames=vis_frames),
        mwir=FrameSequence(modality="mwir", frames=mwir_frames),
        gt=gt,
        spec=spec,
        background_visible=bg_vis,
        background_mwir=bg_mwir,
    )


def _add_fringe(canvas, alpha, x, y, tw, th, offset):
    """Paint the 1-px blurred border of the alpha mask, clipped to the image."""
    h, w = canvas.shape
    for row, ys in ((0, y - 1), (th + 1, y + th)):
        if 0 <= ys < h:
            x0, x1 = max(x - 1, 0), min(x + tw + 1, w)
            canvas[ys, x0:x1] += alpha[row, (x0 - x + 1) : (x1 - x + 1)] * offset
    for col, xs in ((0, x - 1), (tw + 1, x + tw)):
        if 0 <= xs < w:
            y0, y1 = max(y, 0), min(y + th, h)
            canvas[y0:y1, xs] += alpha[(y0 - y + 1) : (y1 - y + 1), col] * offset


# -- suite profiles --------------------------------------------------------------


@dataclass
class SuiteProfile:
    name: str
    train_sequences: int
    test_sequences: int
    frames: int
    scene: SceneSpec
    # per-sequence scene variations (cycled) for mixed-style suites
    variants: list = field(default_factory=list)


def _easy_scene():
    return SceneSpec(
        image_dims=(320, 240),
        background_texture="terrain-gradient",
        target_size_range=(48, 72),
        visible_contrast=0.45,
        thermal_contrast=0.5,
        velocity_range=(1.0, 3.0),
        frames=40,
        noise_sigma=4.0,
    )


def _camouflage_scene():
    return SceneSpec(
        image_dims=(320, 240),
        background_texture="terrain-gradient",
        target_size_range=(28, 44),
        visible_contrast=0.04,
        thermal_contrast=0.7,
        velocity_range=(1.0, 2.5),
        frames=20,
        noise_sigma=3.0,
    )


def _small_target_scene():
    return SceneSpec(
        image_dims=(320, 240),
        background_texture="terrain-gradient",
        target_size_range=(8, 16),
        visible_contrast=0.5,
        thermal_contrast=0.6,
        velocity_range=(0.5, 1.5),
        frames=20,
        noise_sigma=3.0,
    )


def builtin_profiles():
    easy = _easy_scene()
    camo = _camouflage_scene()
    small = _small_target_scene()
    return {
        "easy": SuiteProfile("easy", train_sequences=20, test_sequences=5,
                             frames=40, scene=easy),
        "camouflage": SuiteProfile("camouflage", train_sequences=6, test_sequences=3,
                                   frames=18, scene=camo),
        "small-target": SuiteProfile("small-target", train_sequences=6, test_sequences=2,
                                     frames=20, scene=small),
        "mixed": SuiteProfile(
            "mixed", train_sequences=6, test_sequences=3, frames=12,
            scene=replace(easy, frames=12),
            variants=[replace(easy, frames=12),
                      replace(camo, frames=12),
                      replace(small, frames=12, target_size_range=(12, 20))],
        ),
    }


def apply_profile_overrides(profile: SuiteProfile, text: str) -> SuiteProfile:
    """Apply `key=value` override lines from a plain-text profile config.

    Suite keys: train_sequences, test_sequences, frames.  Any other key is
    forwarded to every SceneSpec field of the profile (e.g. noise_sigma=0,
    visible_contrast=0.3, image_dims=320x240, target_size_range=8:16).
    """
    suite_fields = {"train_sequences", "test_sequences", "frames"}
    scenes = [profile.scene] + list(profile.variants)
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"profile config line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in suite_fields:
            setattr(profile, key, int(value))
            if key == "frames":
                scenes = [replace(s, frames=int(value)) for s in scenes]
        elif key == "image_dims":
            w, h = (int(v) for v in value.split("x"))
            scenes = [replace(s, image_dims=(w, h)) for s in scenes]
        elif key in ("target_size_range", "velocity_range"):
            lo, hi = (float(v) for v in value.split(":"))
            cast = int if key == "target_size_range" else float
            scenes = [replace(s, **{key: (cast(lo), cast(hi))}) for s in scenes]
        elif key in ("visible_contrast", "thermal_contrast", "noise_sigma", "edge_blur"):
            scenes = [replace(s, **{key: float(value)}) for s in scenes]
        elif key in ("target_count",):
            scenes = [replace(s, target_count=int(value)) for s in scenes]
        elif key == "background_texture":
            scenes = [replace(s, background_texture=value) for s in scenes]
        else:
            raise InputError(f"profile config line {lineno}: unknown key {key!r}")
    profile.scene = scenes[0]
    profile.variants = scenes[1:]
    return profile


def write_sequence(seq: SyntheticSequence, root, name):
    seq_dir = os.path.join(root, name)
    for modality, frames in (("visible", seq.visible.frames), ("mwir", seq.mwir.frames)):
        mod_dir = os.path.join(seq_dir, modality)
        os.makedirs(mod_dir, exist_ok=True)
        for idx, frame in enumerate(frames):
            save_plane(frame, os.path.join(mod_dir, f"{idx:06d}.png"))
    with open(os.path.join(seq_dir, "gt.csv"), "w") as fh:
        for idx, boxes in enumerate(seq.gt):
            for b in boxes:
                fh.write(f"{idx},{b.x:g},{b.y:g},{b.w:g},{b.h:g},1\n")


def generate_suite(profile_name, out_dir, seed=0, profiles=None, overrides=None):
    """Write a full train/test dataset for one profile; returns the manifest."""
    profiles = profiles or builtin_profiles()
    if profile_name not in profiles:
        raise InputError(
            f"unknown profile {profile_name!r}; available: {sorted(profiles)}"
        )
    profile = profiles[profile_name]
    if overrides:
        profile = apply_profile_overrides(profile, overrides)
    os.makedirs(out_dir, exist_ok=True)
    scenes = profile.variants or [profile.scene]
    manifest = []
    total = profile.train_sequences + profile.test_sequences
    for i in range(total):
        split = "train" if i < profile.train_sequences else "test"
        # child stream keyed by (seed, index): order-independent generation
        scene = replace(
            scenes[i % len(scenes)],
            frames=profile.frames,
            seed=int(np.random.default_rng([seed, i]).integers(2**31)),
        )
        name = f"{profile.name}_{split}_{i:03d}"
        write_sequence(generate(scene), out_dir, name)
        manifest.append((name, split))
    with open(os.path.join(out_dir, "manifest.txt"), "w") as fh:
        for name, split in manifest:
            fh.write(f"{name} {split}\n")
    return manifest
