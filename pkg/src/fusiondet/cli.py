"""Single executable for the whole pipeline.

Subcommands: synth, propose, train, detect, evaluate, benchmark,
dump-features.  Exit codes: 0 success, 1 input/configuration error,
2 internal error.  Every command writes a run.json manifest with its fully
resolved configuration into --out-dir.
"""

import argparse
import dataclasses
import json
import logging
import os
import sys
import threading
from concurrent.futures import ThreadPoolExecutor

from . import __version__, evaluation, kernels, synthdata
from .detector import DetectConfig, TrainConfig, detect_on_proposals, train
from .detector.sampling import SamplerConfig
from .errors import ConfigurationError, FormatError, InputError
from .fusion import DECISION_COMPONENT_MODES, FusionMode, ingest_dataset
from .neuralnet import SgdConfig, load_weights, network_from_table_file
from .proposals import SelectiveSearchConfig, selective_search

log = logging.getLogger("fusiondet")

MODE_FLAGS = {
    "visible": FusionMode.VISIBLE_ONLY,
    "mwir": FusionMode.MWIR_ONLY,
    "motion": FusionMode.MOTION_ONLY,
    "visible-mwir": FusionMode.VISIBLE_MWIR,
    "three-channel": FusionMode.THREE_CHANNEL,
    "decision": FusionMode.DECISION_LEVEL,
}


def resolve_table(name_or_path):
    """Map 'small'/'vggm' to the packaged tables, anything else is a path."""
    if name_or_path in ("small", "vggm"):
        here = os.path.dirname(__file__)
        return os.path.join(here, "tables", f"{name_or_path}.txt")
    return name_or_path


def _write_manifest(out_dir, command, config):
    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "command": command,
        "version": __version__,
        "kernel_backend": kernels.BACKEND,
        "config": config,
    }
    with open(os.path.join(out_dir, "run.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)


def _load_train_config(path, iterations, seed):
    """Plain-text key=value training config, overridden by CLI flags."""
    values = {}
    if path:
        try:
            with open(path) as fh:
                for lineno, raw in enumerate(fh, 1):
                    line = raw.split("#", 1)[0].strip()
                    if not line:
                        continue
                    if "=" not in line:
                        raise InputError(f"{path}:{lineno}: expected key=value")
                    key, value = (s.strip() for s in line.split("=", 1))
                    values[key] = value
        except OSError as exc:
            raise InputError(f"cannot read config {path}: {exc}") from exc

    def fget(key, default):
        return float(values[key]) if key in values else default

    def iget(key, default):
        return int(values[key]) if key in values else default

    schedule = [(0, 0.001), (30000, 0.0001)]
    if "lr_schedule" in values:
        schedule = []
        for part in values["lr_schedule"].split(","):
            it, lr = part.split(":")
            schedule.append((int(it), float(lr)))
    sgd = SgdConfig(
        learning_rate=fget("learning_rate", 0.001),
        momentum=fget("momentum", 0.9),
        weight_decay=fget("weight_decay", 0.0005),
        schedule=schedule,
    )
    sampler = SamplerConfig(
        rois_per_image=iget("rois_per_image", 64),
        fg_fraction=fget("fg_fraction", 0.25),
        fg_iou_threshold=fget("fg_iou_threshold", 0.5),
        bg_iou_range=(fget("bg_iou_low", 0.1), fget("bg_iou_high", 0.5)),
    )
    search = SelectiveSearchConfig(
        ks=tuple(float(k) for k in values.get("ss_k", "100").split(",")),
        sigma=fget("ss_sigma", 0.8),
        min_size=iget("ss_min_size", 50),
    )
    cfg = TrainConfig(
        iterations=iterations if iterations is not None else iget("iterations", 40000),
        sgd=sgd,
        lam=fget("lambda", 1.0),
        images_per_batch=iget("images_per_batch", 2),
        sampler=sampler,
        search=search,
        seed=seed if seed is not None else iget("seed", 0),
        checkpoint_interval=iget("checkpoint_interval", 0),
        log_every=iget("log_every", 1),
    )
    return cfg, values.get("net")


def _parallel_map(fn, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _search_config_from_args(args):
    return SelectiveSearchConfig(
        ks=tuple(float(k) for k in args.ss_k.split(",")),
        sigma=args.ss_sigma,
        min_size=args.ss_min_size,
    )


# -- subcommands -----------------------------------------------------------------


def cmd_synth(args):
    overrides = None
    if args.profile_config:
        with open(args.profile_config) as fh:
            overrides = fh.read()
    seed = args.seed if args.seed is not None else 0
    manifest = synthdata.generate_suite(
        args.profile, args.out_dir, seed=seed, overrides=overrides
    )
    _write_manifest(args.out_dir, "synth", {
        "profile": args.profile, "seed": seed,
        "sequences": len(manifest),
    })
    print(f"wrote {len(manifest)} sequences under {args.out_dir}")
    return 0


def cmd_propose(args):
    dataset = ingest_dataset(args.data)
    samples = dataset.split(args.split)
    mode = MODE_FLAGS[args.mode]
    if mode == FusionMode.DECISION_LEVEL:
        raise InputError("proposals operate on pixel-fused images; "
                         "pick one of the pixel modes")
    config = _search_config_from_args(args)
    os.makedirs(os.path.join(args.out_dir, "proposals"), exist_ok=True)

    def run(sample):
        return sample.image_id, sample, selective_search(sample.fused(mode), config)

    results = _parallel_map(run, samples, args.threads)
    results.sort(key=lambda r: r[0])
    counts = []
    for image_id, sample, props in results:
        name = image_id.replace("/", "_")
        path = os.path.join(args.out_dir, "proposals", f"{name}.csv")
        with open(path, "w") as fh:
            fh.write("x,y,w,h\n")
            for b in props.boxes:
                fh.write(f"{b.x:g},{b.y:g},{b.w:g},{b.h:g}\n")
        counts.append(len(props.boxes))
        if args.overlay:
            from .boxes import Detection

            overlay = [Detection(box=b, score=1.0) for b in props.boxes]
            evaluation.save_overlay(
                sample.fused(mode), overlay,
                os.path.join(args.out_dir, "proposals", f"{name}.png"),
            )
    _write_manifest(args.out_dir, "propose", {
        "data": args.data, "mode": args.mode, "split": args.split,
        "search": dataclasses.asdict(config), "threads": args.threads,
        "images": len(samples),
    })
    if counts:
        print(f"proposals per image: min={min(counts)} median={sorted(counts)[len(counts)//2]} "
              f"max={max(counts)} over {len(counts)} images")
    return 0


def cmd_train(args):
    mode = MODE_FLAGS[args.mode]
    config, net_from_file = _load_train_config(args.config, args.iters, args.seed)
    table = resolve_table(args.net or net_from_file or "small")
    network = network_from_table_file(table, seed=config.seed)
    if args.init_weights:
        loaded = load_weights(network, args.init_weights, strict=False)
        log.info("initialized %d tensors from %s", len(loaded), args.init_weights)
    dataset = ingest_dataset(args.data)
    os.makedirs(args.out_dir, exist_ok=True)
    _write_manifest(args.out_dir, "train", {
        "data": args.data, "mode": args.mode, "net": table,
        "init_weights": args.init_weights,
        "train_config": dataclasses.asdict(config),
    })

    def progress(done, total):
        print(f"  {done}/{total}", flush=True)

    train(dataset, mode, network, config, out_dir=args.out_dir,
          progress=progress if args.verbose else None)
    print(f"trained {config.iterations} iterations -> {args.out_dir}/final.weights")
    return 0


def _load_network_for_weights(weights_path, table, seed=0):
    network = network_from_table_file(resolve_table(table), seed=seed)
    load_weights(network, weights_path, strict=True)
    return network


def cmd_detect(args):
    mode = MODE_FLAGS[args.mode]
    if mode == FusionMode.DECISION_LEVEL:
        raise InputError("detect runs one pixel-fused network; use `benchmark` "
                         "for the decision-level combiner")
    network = _load_network_for_weights(args.weights, args.net)
    dataset = ingest_dataset(args.data)
    samples = dataset.split(args.split)
    config = DetectConfig(score_threshold=args.score_threshold, nms_iou=args.nms_iou,
                          search=_search_config_from_args(args))

    # concurrent inference goes through independent clones, one per worker
    worker_state = threading.local()

    def run(sample):
        net = getattr(worker_state, "network", None)
        if net is None:
            net = network if args.threads <= 1 else network.clone()
            worker_state.network = net
        fused = sample.fused(mode)
        props = selective_search(fused, config.search)
        dets = detect_on_proposals(net, fused.as_array(), props.boxes, config)
        return sample.image_id, sample, fused, dets

    results = _parallel_map(run, samples, args.threads)
    results.sort(key=lambda r: r[0])
    dets_by_image = {image_id: dets for image_id, _, _, dets in results}
    os.makedirs(args.out_dir, exist_ok=True)
    out_csv = os.path.join(args.out_dir, "detections.csv")
    evaluation.write_detections_csv(dets_by_image, out_csv)
    if args.overlay:
        overlay_dir = os.path.join(args.out_dir, "overlays")
        os.makedirs(overlay_dir, exist_ok=True)
        for image_id, sample, fused, dets in results:
            evaluation.save_overlay(
                fused, dets, os.path.join(overlay_dir, image_id.replace("/", "_") + ".png"),
                gts=sample.ground_truth,
            )
    _write_manifest(args.out_dir, "detect", {
        "data": args.data, "mode": args.mode, "weights": args.weights,
        "net": args.net, "split": args.split,
        "score_threshold": args.score_threshold, "nms_iou": args.nms_iou,
    })
    total = sum(len(d) for d in dets_by_image.values())
    print(f"{total} detections over {len(samples)} images -> {out_csv}")
    return 0


def cmd_evaluate(args):
    dets_by_image = evaluation.read_detections_csv(args.dets)
    dataset = ingest_dataset(args.gt)
    samples = dataset.split(args.split)
    gts_by_image = {s.image_id: s.ground_truth for s in samples}
    curve, top1 = evaluation.evaluate_detections(dets_by_image, gts_by_image,
                                                 interpolation=args.interpolation)
    os.makedirs(args.out_dir, exist_ok=True)
    report = evaluation.EvalReport(mode=FusionMode.THREE_CHANNEL, ap=curve.ap,
                                   top1=top1, images=len(samples), pr_curve=curve)
    evaluation.write_report_csv(report, os.path.join(args.out_dir, "report.csv"))
    evaluation.write_pr_csv(curve, os.path.join(args.out_dir, "pr.csv"))
    if args.plot:
        evaluation.plot_pr_svg(curve, args.plot)
    _write_manifest(args.out_dir, "evaluate", {
        "dets": args.dets, "gt": args.gt, "split": args.split,
        "interpolation": args.interpolation,
    })
    print(f"AP={curve.ap:.4f} top1={top1:.4f} over {len(samples)} images")
    return 0


def cmd_benchmark(args):
    requested = []
    for name in args.modes.split(","):
        name = name.strip()
        if name == "all":
            requested = list(MODE_FLAGS.values())
            break
        if name not in MODE_FLAGS:
            raise InputError(f"unknown mode {name!r}; choose from {sorted(MODE_FLAGS)}")
        requested.append(MODE_FLAGS[name])

    needed = set()
    for mode in requested:
        if mode == FusionMode.DECISION_LEVEL:
            needed.update(DECISION_COMPONENT_MODES)
        else:
            needed.add(mode)
    missing = []
    networks = {}
    for mode in sorted(needed, key=lambda m: m.value):
        path = os.path.join(args.weights_dir, f"{mode.value}.weights")
        if not os.path.exists(path):
            missing.append(f"{mode.value} ({path})")
        else:
            networks[mode] = _load_network_for_weights(path, args.net)
    if missing:
        raise InputError("missing trained weights for: " + ", ".join(missing))

    dataset = ingest_dataset(args.data)
    config = DetectConfig(score_threshold=args.score_threshold, nms_iou=args.nms_iou,
                          search=_search_config_from_args(args))
    reports = evaluation.run_benchmark(dataset, requested, networks, config,
                                       split=args.split,
                                       interpolation=args.interpolation)
    rows = evaluation.comparison_table(reports)
    os.makedirs(args.out_dir, exist_ok=True)
    evaluation.write_table_csv(rows, os.path.join(args.out_dir, "benchmark.csv"))
    table = evaluation.format_table(rows)
    with open(os.path.join(args.out_dir, "benchmark.txt"), "w") as fh:
        fh.write(table + "\n")
    for report in reports:
        evaluation.write_pr_csv(
            report.pr_curve, os.path.join(args.out_dir, f"pr_{report.mode.value}.csv")
        )
    _write_manifest(args.out_dir, "benchmark", {
        "data": args.data, "modes": [m.value for m in requested],
        "weights_dir": args.weights_dir, "net": args.net, "split": args.split,
    })
    print(table)
    return 0


def cmd_dump_features(args):
    network = _load_network_for_weights(args.weights, args.net)
    dataset = ingest_dataset(args.data)
    samples = dataset.split(args.split)
    if args.image_id:
        matches = [s for s in samples if s.image_id == args.image_id]
        if not matches:
            raise InputError(f"image {args.image_id!r} not in split {args.split!r}")
        sample = matches[0]
    else:
        sample = samples[0]
    mode = MODE_FLAGS[args.mode]
    fused = sample.fused(mode)
    os.makedirs(args.out_dir, exist_ok=True)
    name = f"{sample.image_id.replace('/', '_')}_{args.layer}.png"
    path = evaluation.dump_feature_map(network, fused.as_array(), args.layer,
                                       os.path.join(args.out_dir, name),
                                       reduce=args.reduce)
    _write_manifest(args.out_dir, "dump-features", {
        "data": args.data, "weights": args.weights, "layer": args.layer,
        "image_id": sample.image_id, "mode": args.mode, "reduce": args.reduce,
    })
    print(f"feature map -> {path}")
    return 0


# -- argument wiring ---------------------------------------------------------------


def _add_common(p, data=True, out=True):
    if data:
        p.add_argument("--data", required=True, help="dataset root directory")
    if out:
        p.add_argument("--out-dir", "--out", dest="out_dir", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--verbose", action="store_true")


def _add_mode(p, default=None):
    p.add_argument("--mode", choices=sorted(MODE_FLAGS), default=default,
                   required=default is None)


def _add_search(p):
    p.add_argument("--ss-k", default="100")
    p.add_argument("--ss-sigma", type=float, default=0.8)
    p.add_argument("--ss-min-size", type=int, default=50)


def _add_detect_opts(p):
    p.add_argument("--score-threshold", type=float, default=0.05)
    p.add_argument("--nms-iou", type=float, default=0.3)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fusiondet",
        description="tri-modal channel-fusion object detection pipeline",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic tri-modal dataset")
    p.add_argument("--profile", required=True,
                   choices=sorted(synthdata.builtin_profiles()))
    p.add_argument("--profile-config", default=None,
                   help="plain-text key=value overrides for the profile")
    _add_common(p, data=False)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("propose", help="write selective-search proposals per image")
    _add_common(p)
    _add_mode(p, default="three-channel")
    _add_search(p)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--overlay", action="store_true")
    p.set_defaults(func=cmd_propose)

    p = sub.add_parser("train", help="train a detector for one fusion mode")
    _add_common(p)
    _add_mode(p)
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--config", default=None, help="key=value training config file")
    p.add_argument("--net", default=None, help="layer table: small, vggm, or a path")
    p.add_argument("--init-weights", default=None,
                   help="weights file for partial initialization (strict=false)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="run inference and write detections CSV")
    _add_common(p)
    _add_mode(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--net", default="small")
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--overlay", action="store_true")
    _add_search(p)
    _add_detect_opts(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="score a detections CSV against ground truth")
    p.add_argument("--dets", required=True)
    p.add_argument("--gt", required=True, help="dataset root with gt.csv files")
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--plot", default=None, help="write the PR curve SVG here")
    p.add_argument("--interpolation", choices=("all_points", "11_point"),
                   default="all_points")
    _add_common(p, data=False)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", help="compare fusion modes on accuracy and time")
    _add_common(p)
    p.add_argument("--modes", default="all",
                   help="comma list of modes or 'all' for the six-row table")
    p.add_argument("--weights-dir", required=True,
                   help="directory holding <mode>.weights files")
    p.add_argument("--net", default="small")
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--interpolation", choices=("all_points", "11_point"),
                   default="all_points")
    _add_search(p)
    _add_detect_opts(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("dump-features", help="save a layer's activation projection")
    _add_common(p)
    _add_mode(p, default="three-channel")
    p.add_argument("--weights", required=True)
    p.add_argument("--net", default="small")
    p.add_argument("--layer", default="conv5")
    p.add_argument("--reduce", choices=("max", "mean"), default="max")
    p.add_argument("--image-id", default=None)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.set_defaults(func=cmd_dump_features)
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; that is caller input, code 1 here
        return 1 if exc.code == 2 else int(exc.code or 0)
    try:
        return args.func(args)
    except (InputError, ConfigurationError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports and exits
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
