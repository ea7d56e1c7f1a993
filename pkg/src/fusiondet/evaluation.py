"""Detection metrics and the mode-comparison harness.

IoU-thresholded greedy matching (TP needs overlap >= 0.5), average precision
as the exact area under the monotone-interpolated precision-recall curve
(11-point interpolation available behind a flag), top-1 precision for the
one-target-per-image protocol, a decision-level combiner over per-modality
detectors, feature-map dumps and the per-mode accuracy/time comparison
table.
"""

import csv
import logging
import statistics
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .boxes import BBox, Detection, GroundTruthBox, iou, nms
from .detector.inference import DetectConfig, detect_on_proposals
from .errors import ConfigurationError, InputError
from .fusion import DECISION_COMPONENT_MODES, FusionMode
from .proposals import selective_search

log = logging.getLogger(__name__)

# Accuracy reported for this detector family on the access-controlled SENSIAC
# benchmark (full-scale GPU training); context only, not reproducible here.
SENSIAC_REFERENCE = {"three_channel": {"ap": 98.34, "top1": 98.90}}


@dataclass
class MatchResult:
    detection: Detection
    matched_gt: Optional[GroundTruthBox]
    iou: float
    is_true_positive: bool


@dataclass
class PRCurve:
    points: list  # ordered (recall, precision)
    ap: float


@dataclass
class EvalReport:
    mode: FusionMode
    ap: float
    top1: float
    proposal_seconds: float = 0.0
    network_seconds: float = 0.0
    overall_seconds: float = 0.0
    images: int = 0
    pr_curve: Optional[PRCurve] = None


def match_detections(dets, gts, iou_threshold=0.5):
    """Greedy matching in descending score order; each gt matches at most
    one detection, later hits on a taken gt count as false positives."""
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    taken = [False] * len(gts)
    results = [None] * len(dets)
    for i in order:
        det = dets[i]
        best_iou, best_j = 0.0, -1
        for j, gt in enumerate(gts):
            if taken[j]:
                continue
            ov = iou(det.box, gt.box)
            if ov > best_iou:
                best_iou, best_j = ov, j
        if best_j >= 0 and best_iou >= iou_threshold:
            taken[best_j] = True
            results[i] = MatchResult(det, gts[best_j], best_iou, True)
        else:
            results[i] = MatchResult(det, None, best_iou, False)
    return results


def _pr_points(matches, total_gt):
    """Cumulative (recall, precision) walking detections by descending score."""
    order = sorted(range(len(matches)), key=lambda i: (-matches[i].detection.score, i))
    tp = fp = 0
    points = []
    for i in order:
        if matches[i].is_true_positive:
            tp += 1
        else:
            fp += 1
        points.append((tp / total_gt, tp / (tp + fp)))
    return points


def average_precision(matches, total_gt, interpolation="all_points"):
    """Area under the precision-recall curve over a dataset's matches."""
    if total_gt <= 0:
        raise InputError("average_precision needs at least one ground-truth box")
    if interpolation not in ("all_points", "11_point"):
        raise ConfigurationError(f"unknown interpolation {interpolation!r}")
    points = _pr_points(matches, total_gt)
    if not points:
        return PRCurve(points=[], ap=0.0)
    recalls = np.array([r for r, _ in points])
    precisions = np.array([p for _, p in points])
    if interpolation == "all_points":
        mrec = np.concatenate([[0.0], recalls, [1.0]])
        mpre = np.concatenate([[0.0], precisions, [0.0]])
        for i in range(len(mpre) - 2, -1, -1):
            mpre[i] = max(mpre[i], mpre[i + 1])
        changed = np.flatnonzero(mrec[1:] != mrec[:-1]) + 1
        ap = float(((mrec[changed] - mrec[changed - 1]) * mpre[changed]).sum())
    elif interpolation == "11_point":
        ap = 0.0
        for r in np.linspace(0.0, 1.0, 11):
            above = precisions[recalls >= r - 1e-12]
            ap += (above.max() if above.size else 0.0) / 11.0
        ap = float(ap)
    else:
        raise ConfigurationError(f"unknown interpolation {interpolation!r}")
    return PRCurve(points=points, ap=ap)


def top1_precision(dets_by_image, gts_by_image):
    """Fraction of images whose highest-scored detection hits the single gt.

    Every image must carry exactly one ground-truth box; images without
    detections count as misses.
    """
    if not gts_by_image:
        raise InputError("top1_precision needs at least one image")
    hits = 0
    for image_id, gts in gts_by_image.items():
        if len(gts) != 1:
            raise InputError(
                f"top1 precision expects exactly one gt per image, "
                f"{image_id} has {len(gts)}"
            )
        dets = dets_by_image.get(image_id, [])
        if not dets:
            continue
        top = min(range(len(dets)), key=lambda i: (-dets[i].score, i))
        if iou(dets[top].box, gts[0].box) >= 0.5:
            hits += 1
    return hits / len(gts_by_image)


def evaluate_detections(dets_by_image, gts_by_image, interpolation="all_points"):
    """AP + top1 over a whole split keyed by image id."""
    matches = []
    total_gt = 0
    for image_id in sorted(gts_by_image):
        gts = gts_by_image[image_id]
        total_gt += len(gts)
        matches.extend(match_detections(dets_by_image.get(image_id, []), gts))
    curve = average_precision(matches, total_gt, interpolation)
    top1 = top1_precision(dets_by_image, gts_by_image)
    return curve, top1


# -- decision-level fusion -------------------------------------------------------


@dataclass
class DecisionFuseConfig:
    merge_iou: float = 0.5
    nms_iou: float = 0.3


def decision_fuse(det_lists, config: DecisionFuseConfig = None):
    """Merge per-modality detector outputs for one image.

    Pooled detections cluster greedily by descending score at IoU >=
    merge_iou; each cluster collapses to a score-weighted coordinate average
    carrying the maximum score, then ordinary NMS prunes the survivors.
    """
    config = config or DecisionFuseConfig()
    pooled = [d for dets in det_lists for d in dets]
    order = sorted(range(len(pooled)), key=lambda i: (-pooled[i].score, i))
    used = [False] * len(pooled)
    merged = []
    for i in order:
        if used[i]:
            continue
        cluster = [pooled[i]]
        used[i] = True
        for j in order:
            if not used[j] and iou(pooled[i].box, pooled[j].box) >= config.merge_iou:
                used[j] = True
                cluster.append(pooled[j])
        weights = np.array([d.score for d in cluster])
        coords = np.array([[d.box.x, d.box.y, d.box.w, d.box.h] for d in cluster])
        avg = (coords * weights[:, None]).sum(axis=0) / weights.sum()
        merged.append(
            Detection(box=BBox(*avg), score=max(d.score for d in cluster), class_id=1)
        )
    return sorted(nms(merged, config.nms_iou), key=lambda d: -d.score)


# -- artifacts -------------------------------------------------------------------


def dump_feature_map(network, fused_array, layer_name, out_path, reduce="max"):
    """Project one layer's activations to a grayscale PNG (min-max scaled)."""
    from PIL import Image

    acts = network.layer_activations(fused_array, layer_name)[0]
    if reduce == "max":
        proj = acts.max(axis=0)
    elif reduce == "mean":
        proj = acts.mean(axis=0)
    else:
        raise ConfigurationError(f"unknown reduction {reduce!r}")
    lo, hi = float(proj.min()), float(proj.max())
    if hi > lo:
        proj = (proj - lo) / (hi - lo) * 255.0
    else:
        proj = np.zeros_like(proj)
    Image.fromarray(proj.astype(np.uint8), mode="L").save(out_path)
    return out_path


def save_overlay(fused_image, detections, out_path, gts=None):
    """Render the fused image as RGB with predicted boxes in green
    (ground truth, when given, in yellow)."""
    from PIL import Image, ImageDraw

    b, g, r = (p.values for p in fused_image.planes)
    rgb = np.clip(np.stack([r, g, b], axis=-1), 0, 255).astype(np.uint8)
    img = Image.fromarray(rgb, mode="RGB")
    draw = ImageDraw.Draw(img)
    if gts:
        for gt in gts:
            box = gt.box if hasattr(gt, "box") else gt
            draw.rectangle(box.as_xyxy(), outline=(255, 220, 0), width=1)
    for det in detections:
        draw.rectangle(det.box.as_xyxy(), outline=(0, 255, 0), width=2)
    img.save(out_path)
    return out_path


def write_pr_csv(curve: PRCurve, path):
    with open(path, "w") as fh:
        fh.write("recall,precision\n")
        for r, p in curve.points:
            fh.write(f"{r:.6f},{p:.6f}\n")


def plot_pr_svg(curve: PRCurve, path, title="precision-recall"):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    rs = [0.0] + [r for r, _ in curve.points]
    ps = [1.0] + [p for _, p in curve.points]
    ax.plot(rs, ps, drawstyle="steps-post")
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0, 1.02)
    ax.set_ylim(0, 1.02)
    ax.set_title(f"{title} (AP={curve.ap:.4f})")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


# -- benchmark -------------------------------------------------------------------

BENCHMARK_MODE_ORDER = (
    FusionMode.VISIBLE_ONLY,
    FusionMode.MWIR_ONLY,
    FusionMode.MOTION_ONLY,
    FusionMode.VISIBLE_MWIR,
    FusionMode.THREE_CHANNEL,
    FusionMode.DECISION_LEVEL,
)


def _timed_single_mode(sample, mode, network, detect_config):
    t0 = time.perf_counter()
    fused = sample.fused(mode)
    arr = fused.as_array()
    t1 = time.perf_counter()
    proposals = selective_search(fused, detect_config.search)
    t2 = time.perf_counter()
    dets = detect_on_proposals(network, arr, proposals.boxes, detect_config)
    t3 = time.perf_counter()
    return dets, t2 - t1, t3 - t2, t3 - t0


def run_benchmark(dataset, modes, networks, detect_config=None, split="test",
                  interpolation="all_points", progress=None):
    """Evaluate each requested fusion mode over a split.

    networks maps FusionMode -> Network; decision_level needs the three
    single-modality networks instead of one of its own.  Returns an ordered
    list of EvalReport (AP, top-1, median per-image stage timings).
    """
    detect_config = detect_config or DetectConfig()
    samples = dataset.split(split) if hasattr(dataset, "split") else list(dataset)
    if not samples:
        raise InputError(f"split {split!r} is empty")
    modes = list(modes)
    for mode in modes:
        required = DECISION_COMPONENT_MODES if mode == FusionMode.DECISION_LEVEL else (mode,)
        missing = [m.value for m in required if m not in networks]
        if missing:
            raise ConfigurationError(
                f"mode {mode.value} needs trained networks for: {', '.join(missing)}"
            )

    reports = []
    for mode in modes:
        dets_by_image = {}
        gts_by_image = {}
        prop_times, net_times, overall_times = [], [], []
        for i, sample in enumerate(samples):
            gts_by_image[sample.image_id] = sample.ground_truth
            if mode == FusionMode.DECISION_LEVEL:
                lists = []
                pt = nt = ot = 0.0
                for sub in DECISION_COMPONENT_MODES:
                    dets, p, n, o = _timed_single_mode(sample, sub, networks[sub],
                                                       detect_config)
                    lists.append(dets)
                    pt += p
                    nt += n
                    ot += o
                t0 = time.perf_counter()
                fused_dets = decision_fuse(lists)
                ot += time.perf_counter() - t0
                dets_by_image[sample.image_id] = fused_dets
            else:
                dets, pt, nt, ot = _timed_single_mode(sample, mode, networks[mode],
                                                      detect_config)
                dets_by_image[sample.image_id] = dets
            prop_times.append(pt)
            net_times.append(nt)
            overall_times.append(ot)
            if progress and (i + 1) % 25 == 0:
                progress(mode, i + 1, len(samples))
        curve, top1 = evaluate_detections(dets_by_image, gts_by_image, interpolation)
        reports.append(
            EvalReport(
                mode=mode,
                ap=curve.ap,
                top1=top1,
                proposal_seconds=statistics.median(prop_times),
                network_seconds=statistics.median(net_times),
                overall_seconds=statistics.median(overall_times),
                images=len(samples),
                pr_curve=curve,
            )
        )
    return reports


def comparison_table(reports):
    """Rows of (mode, AP%, top1%, proposal s, network s, overall s)."""
    rows = []
    ordered = sorted(
        reports, key=lambda r: BENCHMARK_MODE_ORDER.index(r.mode)
        if r.mode in BENCHMARK_MODE_ORDER else 99
    )
    for r in ordered:
        rows.append(
            (
                r.mode.value,
                100.0 * r.ap,
                100.0 * r.top1,
                r.proposal_seconds,
                r.network_seconds,
                r.overall_seconds,
            )
        )
    return rows


def format_table(rows):
    header = f"{'Mode':<16}{'AP %':>8}{'Top1 %':>9}{'Proposal s':>12}{'Network s':>11}{'Overall s':>11}"
    lines = [header, "-" * len(header)]
    for mode, ap, top1, pt, nt, ot in rows:
        lines.append(f"{mode:<16}{ap:>8.2f}{top1:>9.2f}{pt:>12.3f}{nt:>11.3f}{ot:>11.3f}")
    return "\n".join(lines)


def write_table_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mode", "ap_percent", "top1_percent",
                         "proposal_s_per_image", "network_s_per_image",
                         "overall_s_per_image"])
        for row in rows:
            writer.writerow([row[0]] + [f"{v:.6f}" for v in row[1:]])


def write_report_csv(report: EvalReport, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mode", "ap", "top1", "proposal_s_per_image",
                         "network_s_per_image", "overall_s_per_image", "images"])
        writer.writerow([
            report.mode.value, f"{report.ap:.6f}", f"{report.top1:.6f}",
            f"{report.proposal_seconds:.6f}", f"{report.network_seconds:.6f}",
            f"{report.overall_seconds:.6f}", report.images,
        ])


def read_detections_csv(path):
    """detections CSV rows: image_id,x,y,w,h,score -> dict image_id -> [Detection]."""
    dets = {}
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            for lineno, row in enumerate(reader, 1):
                if not row or row[0] in ("image_id",) or row[0].startswith("#"):
                    continue
                if len(row) != 6:
                    raise InputError(f"{path}:{lineno}: expected 6 columns")
                box = BBox(float(row[1]), float(row[2]), float(row[3]), float(row[4]))
                dets.setdefault(row[0], []).append(
                    Detection(box=box, score=float(row[5]), class_id=1)
                )
    except OSError as exc:
        raise InputError(f"cannot read detections {path}: {exc}") from exc
    return dets


def write_detections_csv(dets_by_image, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "x", "y", "w", "h", "score"])
        for image_id in sorted(dets_by_image):
            for d in dets_by_image[image_id]:
                writer.writerow([
                    image_id, f"{d.box.x:.2f}", f"{d.box.y:.2f}",
                    f"{d.box.w:.2f}", f"{d.box.h:.2f}", f"{d.score:.6f}",
                ])
