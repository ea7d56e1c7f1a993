"""Training orchestration: per-image ROI sampling, the joint loss, momentum
SGD with the stepped learning-rate schedule, CSV logging and checkpoints."""

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, InputError, InternalError
from ..fusion import FusionMode
from ..neuralnet import SgdConfig, SgdOptimizer, save_weights
from ..proposals import SelectiveSearchConfig, selective_search
from .losses import batch_loss_and_grads
from .sampling import SamplerConfig, sample_rois
from .targets import encode_deltas_array

log = logging.getLogger(__name__)

DELTA_STD_FLOOR = 1e-3


@dataclass
class TrainConfig:
    iterations: int = 40000
    sgd: SgdConfig = field(
        default_factory=lambda: SgdConfig(
            learning_rate=0.001,
            momentum=0.9,
            weight_decay=0.0005,
            schedule=[(0, 0.001), (30000, 0.0001)],
        )
    )
    lam: float = 1.0
    images_per_batch: int = 2
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    search: SelectiveSearchConfig = field(default_factory=SelectiveSearchConfig)
    seed: int = 0
    checkpoint_interval: int = 0  # 0 disables intermediate checkpoints
    normalize_deltas: bool = True
    log_every: int = 1


@dataclass
class TrainRecord:
    iteration: int
    l_cls: float
    l_bbox: float
    lr: float


class TrainingLog:
    def __init__(self):
        self.records = []

    def append(self, rec):
        self.records.append(rec)

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write("iteration,l_cls,l_bbox,lr\n")
            for r in self.records:
                fh.write(f"{r.iteration},{r.l_cls:.6f},{r.l_bbox:.6f},{r.lr:g}\n")


def compute_proposals(samples, mode: FusionMode, config: SelectiveSearchConfig,
                      progress=None):
    """Selective search per training sample on its mode-fused image."""
    out = []
    for i, sample in enumerate(samples):
        out.append(selective_search(sample.fused(mode), config))
        if progress and (i + 1) % 50 == 0:
            progress(i + 1, len(samples))
    return out


def delta_normalization(samples, proposal_sets, fg_iou_threshold):
    """Per-coordinate mean/std of encoded fg deltas over the whole train set."""
    from ..boxes import iou_matrix

    rows = []
    for sample, props in zip(samples, proposal_sets):
        gt_boxes = [g.box for g in sample.ground_truth]
        if not gt_boxes:
            continue
        cands = list(props.boxes) + gt_boxes
        ious = iou_matrix(cands, gt_boxes)
        best_gt = ious.argmax(axis=1)
        best = ious[np.arange(len(cands)), best_gt]
        keep = np.flatnonzero(best >= fg_iou_threshold)
        if keep.size == 0:
            continue
        p = np.array([[cands[i].x, cands[i].y, cands[i].w, cands[i].h] for i in keep])
        g = np.array(
            [
                [gt_boxes[best_gt[i]].x, gt_boxes[best_gt[i]].y,
                 gt_boxes[best_gt[i]].w, gt_boxes[best_gt[i]].h]
                for i in keep
            ]
        )
        rows.append(encode_deltas_array(p, g))
    if not rows:
        return np.zeros(4), np.ones(4)
    all_deltas = np.concatenate(rows)
    mean = all_deltas.mean(axis=0)
    std = np.maximum(all_deltas.std(axis=0), DELTA_STD_FLOOR)
    return mean, std


def _layer_norms(network):
    return {
        name: float(np.sqrt((t.data.astype(np.float64) ** 2).sum()))
        for name, t in network.named_parameters().items()
    }


def train(dataset, mode: FusionMode, network, config: TrainConfig,
          out_dir=None, proposal_sets=None, progress=None):
    """Train a network in place; returns (network, TrainingLog).

    Deterministic for a fixed seed: one seeded generator drives image order,
    ROI sampling and dropout.  Proposals are computed once per image up
    front (or passed in precomputed).
    """
    samples = dataset.train if hasattr(dataset, "train") else list(dataset)
    if not samples:
        raise InputError("training split is empty")
    if mode == FusionMode.DECISION_LEVEL:
        raise ConfigurationError("decision_level is an evaluation-time combiner; "
                                 "train the three single-modality networks instead")
    for s in samples:
        if not s.ground_truth:
            raise InputError(f"sample {s.image_id} has no ground-truth box")

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(config.seed)
    if proposal_sets is None:
        proposal_sets = compute_proposals(samples, mode, config.search, progress=progress)

    if config.normalize_deltas:
        mean, std = delta_normalization(samples, proposal_sets,
                                        config.sampler.fg_iou_threshold)
    else:
        mean, std = np.zeros(4), np.ones(4)
    network.delta_mean = mean.astype(network.dtype)
    network.delta_std = std.astype(network.dtype)
    log.info("delta normalization mean=%s std=%s", np.round(mean, 4), np.round(std, 4))

    optimizer = SgdOptimizer(network.named_parameters(), config.sgd)
    training_log = TrainingLog()
    order = rng.permutation(len(samples))
    cursor = 0

    fused_cache = {}

    def fused_array(idx):
        if idx not in fused_cache:
            fused_cache[idx] = samples[idx].fused(mode).as_array()
        return fused_cache[idx]

    for iteration in range(config.iterations):
        optimizer.zero_grad()
        l_cls_total = 0.0
        l_box_total = 0.0
        for _ in range(config.images_per_batch):
            if cursor >= len(order):
                order = rng.permutation(len(samples))
                cursor = 0
            idx = int(order[cursor])
            cursor += 1
            sample = samples[idx]
            rois = sample_rois(proposal_sets[idx], sample.ground_truth,
                               config.sampler, rng)
            roi_arr = np.array([[r.roi.x, r.roi.y, r.roi.w, r.roi.h] for r in rois])
            labels = np.array([r.label for r in rois], dtype=np.int64)
            targets = np.zeros((len(rois), 4))
            for i, r in enumerate(rois):
                if r.label == 1:
                    targets[i] = (r.target_delta.as_array() - mean) / std
            logits, deltas = network.forward_rois(fused_array(idx), roi_arr,
                                                  train=True, rng=rng)
            l_cls, l_box, grad_logits, grad_deltas = batch_loss_and_grads(
                logits.astype(np.float64), deltas.astype(np.float64),
                labels, targets, lam=config.lam,
            )
            if not (np.isfinite(l_cls) and np.isfinite(l_box)):
                raise InternalError(
                    f"non-finite loss at iteration {iteration}: "
                    f"l_cls={l_cls} l_bbox={l_box}; layer norms={_layer_norms(network)}"
                )
            scale = 1.0 / config.images_per_batch
            network.backward_rois(
                (grad_logits * scale).astype(network.dtype),
                (grad_deltas * scale).astype(network.dtype),
            )
            l_cls_total += l_cls * scale
            l_box_total += l_box * scale
        lr = optimizer.step(iteration)
        if iteration % config.log_every == 0 or iteration == config.iterations - 1:
            training_log.append(TrainRecord(iteration, l_cls_total, l_box_total, lr))
        if progress and (iteration + 1) % 100 == 0:
            progress(iteration + 1, config.iterations)
        if (
            out_dir
            and config.checkpoint_interval
            and (iteration + 1) % config.checkpoint_interval == 0
            and iteration + 1 < config.iterations
        ):
            save_weights(network, os.path.join(out_dir, f"ckpt_{iteration + 1:06d}.weights"))
    if out_dir:
        training_log.write_csv(os.path.join(out_dir, "training_log.csv"))
        save_weights(network, os.path.join(out_dir, "final.weights"))
    return network, training_log
