import numpy as np
import pytest

from fusiondet.boxes import BBox, Detection, GroundTruthBox, iou
from fusiondet.errors import ConfigurationError, InputError
from fusiondet.evaluation import (
    DecisionFuseConfig,
    EvalReport,
    SENSIAC_REFERENCE,
    average_precision,
    comparison_table,
    decision_fuse,
    dump_feature_map,
    evaluate_detections,
    format_table,
    match_detections,
    read_detections_csv,
    top1_precision,
    write_detections_csv,
)
from fusiondet.fusion import FusionMode

from .conftest import make_tiny_network


def pixel_count_iou(a: BBox, b: BBox):
    """Oracle: count integer-grid pixels covered by [x, x+w) x [y, y+h)."""
    def cells(box):
        return {
            (x, y)
            for x in range(int(box.x), int(box.x + box.w))
            for y in range(int(box.y), int(box.y + box.h))
        }
    ca, cb = cells(a), cells(b)
    inter = len(ca & cb)
    union = len(ca | cb)
    return inter / union


def det(x, y, w, h, score):
    return Detection(box=BBox(x, y, w, h), score=score)


def gt(x, y, w, h, image_id="img"):
    return GroundTruthBox(box=BBox(x, y, w, h), class_id=1, image_id=image_id)


class TestIou:
    def test_identical(self):
        assert iou(BBox(1, 2, 3, 4), BBox(1, 2, 3, 4)) == 1.0

    def test_disjoint(self):
        assert iou(BBox(0, 0, 5, 5), BBox(10, 10, 5, 5)) == 0.0

    def test_quarter_overlap(self):
        assert iou(BBox(0, 0, 10, 10), BBox(5, 5, 10, 10)) == pytest.approx(25 / 175)

    def test_symmetry_and_bounds(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            a = BBox(*rng.integers(0, 30, 2), *rng.integers(1, 20, 2))
            b = BBox(*rng.integers(0, 30, 2), *rng.integers(1, 20, 2))
            v = iou(a, b)
            assert 0.0 <= v <= 1.0
            assert v == iou(b, a)

    def test_matches_pixel_counting_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            a = BBox(*(float(v) for v in rng.integers(0, 25, 2)),
                     *(float(v) for v in rng.integers(1, 15, 2)))
            b = BBox(*(float(v) for v in rng.integers(0, 25, 2)),
                     *(float(v) for v in rng.integers(1, 15, 2)))
            assert iou(a, b) == pytest.approx(pixel_count_iou(a, b), abs=1e-9)


class TestMatchDetections:
    def test_single_exact_hit(self):
        res = match_detections([det(0, 0, 10, 10, 0.9)], [gt(0, 0, 10, 10)])
        assert res[0].is_true_positive and res[0].iou == 1.0

    def test_duplicate_on_one_gt(self):
        dets = [det(0, 0, 10, 10, 0.9), det(1, 1, 10, 10, 0.8)]
        res = match_detections(dets, [gt(0, 0, 10, 10)])
        assert res[0].is_true_positive
        assert not res[1].is_true_positive  # gt already taken

    def test_just_below_threshold_is_fp(self):
        # IoU = 49/151 with a 10x10 gt shifted by (3,3): craft 0.49 instead
        d = det(0, 0, 10, 10, 0.9)
        g = gt(0, 3.42, 10, 10)
        assert iou(d.box, g.box) < 0.5
        res = match_detections([d], [g])
        assert not res[0].is_true_positive

    def test_exactly_half_overlap_is_tp(self):
        # boundary: spec treats "exceeds 0.5" as >= 0.5
        d = det(0, 0, 10, 10, 0.9)
        g = gt(0, 0, 10, 10)
        res = match_detections([d], [g], iou_threshold=0.5)
        assert res[0].is_true_positive
        d2 = det(0, 0, 10, 5, 0.9)  # IoU exactly 0.5 with the 10x10 gt
        assert iou(d2.box, g.box) == 0.5
        assert match_detections([d2], [g])[0].is_true_positive

    def test_each_gt_matched_once(self):
        rng = np.random.default_rng(2)
        gts = [gt(0, 0, 10, 10), gt(20, 20, 10, 10)]
        dets = [det(*rng.uniform(0, 25, 2), 10, 10, float(rng.random())) for _ in range(30)]
        res = match_detections(dets, gts)
        matched = [r.matched_gt for r in res if r.is_true_positive]
        assert len(matched) == len({id(m) for m in matched})


def ap_bruteforce(matches, total_gt):
    """Threshold-enumeration oracle for all-points AP.

    Enumerate every detection score as a threshold, collect the PR point of
    `score >= threshold`, then integrate the upper envelope over recall (an
    O(n^2) literal rendering of 'area under the monotone-interpolated
    precision-recall curve')."""
    scored = sorted(((m.detection.score, m.is_true_positive) for m in matches),
                    key=lambda t: -t[0])
    points = []
    for threshold in sorted({s for s, _ in scored}, reverse=True):
        kept = [flag for s, flag in scored if s >= threshold]
        tp = sum(kept)
        fp = len(kept) - tp
        points.append((tp / total_gt, tp / (tp + fp)))
    area = 0.0
    recalls = sorted({r for r, _ in points} | {0.0})
    for lo, hi in zip(recalls, recalls[1:]):
        peak = max((p for r, p in points if r >= hi), default=0.0)
        area += (hi - lo) * peak
    return area


class TestAveragePrecision:
    def test_perfect_detector(self):
        matches = match_detections([det(0, 0, 5, 5, 0.9)], [gt(0, 0, 5, 5)])
        curve = average_precision(matches, total_gt=1)
        assert curve.ap == 1.0

    def test_fp_then_tp_gives_half(self):
        g = [gt(0, 0, 10, 10)]
        dets = [det(50, 50, 5, 5, 0.9), det(0, 0, 10, 10, 0.8)]
        matches = match_detections(dets, g)
        curve = average_precision(matches, total_gt=1)
        assert curve.ap == pytest.approx(0.5)

    def test_no_detections_zero(self):
        curve = average_precision([], total_gt=3)
        assert curve.ap == 0.0 and curve.points == []

    def test_zero_gt_is_input_error(self):
        with pytest.raises(InputError):
            average_precision([], total_gt=0)

    def test_recalls_non_decreasing(self):
        rng = np.random.default_rng(3)
        gts = [gt(i * 20, 0, 10, 10) for i in range(5)]
        dets = [det(*rng.uniform(0, 90, 2), 10, 10, float(rng.random())) for _ in range(15)]
        curve = average_precision(match_detections(dets, gts), total_gt=5)
        recalls = [r for r, _ in curve.points]
        assert recalls == sorted(recalls)

    def test_matches_bruteforce_on_random_instances(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            n_gt = int(rng.integers(1, 6))
            gts = [gt(i * 30.0, 0.0, 10.0, 10.0) for i in range(n_gt)]
            n_det = int(rng.integers(0, 21))
            dets = []
            for _ in range(n_det):
                if rng.random() < 0.5 and n_gt:
                    # near-hit on a random gt
                    j = int(rng.integers(0, n_gt))
                    dets.append(det(j * 30.0 + rng.uniform(-2, 2), rng.uniform(-2, 2),
                                    10.0, 10.0, float(rng.random())))
                else:
                    dets.append(det(rng.uniform(0, 200), 50.0, 10.0, 10.0,
                                    float(rng.random())))
            matches = match_detections(dets, gts)
            curve = average_precision(matches, total_gt=n_gt)
            assert curve.ap == pytest.approx(ap_bruteforce(matches, n_gt), abs=1e-12)

    def test_11_point_close_to_all_points_on_smooth_curve(self):
        gts = [gt(i * 30, 0, 10, 10) for i in range(4)]
        dets = [det(i * 30, 0, 10, 10, 0.9 - 0.1 * i) for i in range(4)]
        matches = match_detections(dets, gts)
        ap_all = average_precision(matches, 4, "all_points").ap
        ap_11 = average_precision(matches, 4, "11_point").ap
        assert ap_all == 1.0
        assert ap_11 == pytest.approx(1.0)

    def test_unknown_interpolation(self):
        with pytest.raises(ConfigurationError):
            average_precision([], 1, "5_point")


class TestTop1:
    def test_all_hits(self):
        dets = {"a": [det(0, 0, 10, 10, 0.9)], "b": [det(5, 5, 10, 10, 0.8)]}
        gts = {"a": [gt(0, 0, 10, 10, "a")], "b": [gt(5, 5, 10, 10, "b")]}
        assert top1_precision(dets, gts) == 1.0

    def test_sensiac_shaped_arithmetic(self):
        # 2812 images, 16 top-1 misses -> 2796/2812
        hits = {f"i{k}": [det(0, 0, 10, 10, 0.9)] for k in range(2812 - 16)}
        misses = {f"m{k}": [] for k in range(16)}
        gts = {k: [gt(0, 0, 10, 10, k)] for k in list(hits) + list(misses)}
        score = top1_precision({**hits, **misses}, gts)
        assert score == pytest.approx((2812 - 16) / 2812)
        assert score == pytest.approx(0.99431, abs=1e-5)

    def test_zero_detections_zero(self):
        gts = {"a": [gt(0, 0, 10, 10, "a")]}
        assert top1_precision({}, gts) == 0.0

    def test_multiple_gt_is_input_error(self):
        gts = {"a": [gt(0, 0, 10, 10, "a"), gt(20, 20, 5, 5, "a")]}
        with pytest.raises(InputError):
            top1_precision({}, gts)

    def test_monotone_score_rescale_invariance(self):
        rng = np.random.default_rng(5)
        dets, gts = {}, {}
        for k in range(20):
            img = f"i{k}"
            gts[img] = [gt(10, 10, 10, 10, img)]
            dets[img] = [det(*rng.uniform(0, 25, 2), 10, 10, float(rng.random()))
                         for _ in range(int(rng.integers(0, 4)))]
        base = top1_precision(dets, gts)
        rescaled = {
            img: [Detection(box=d.box, score=d.score ** 3 * 0.5 + 0.1) for d in ds]
            for img, ds in dets.items()
        }
        assert top1_precision(rescaled, gts) == base


class TestDecisionFuse:
    def test_single_detector_passthrough(self):
        dets = [det(0, 0, 10, 10, 0.9), det(30, 30, 8, 8, 0.6)]
        out = decision_fuse([dets, [], []])
        assert len(out) == 2
        assert {d.score for d in out} == {0.9, 0.6}

    def test_three_identical_boxes_merge_to_max_score(self):
        lists = [[det(5, 5, 10, 10, s)] for s in (0.9, 0.8, 0.7)]
        out = decision_fuse(lists)
        assert len(out) == 1
        assert out[0].score == 0.9
        for got, want in zip((out[0].box.x, out[0].box.y, out[0].box.w, out[0].box.h),
                             (5.0, 5.0, 10.0, 10.0)):
            assert got == pytest.approx(want, abs=1e-9)

    def test_three_disjoint_boxes_pass(self):
        lists = [[det(0, 0, 5, 5, 0.9)], [det(20, 20, 5, 5, 0.8)], [det(40, 40, 5, 5, 0.7)]]
        out = decision_fuse(lists)
        assert len(out) == 3

    def test_output_count_bounded_by_input(self):
        rng = np.random.default_rng(6)
        lists = [
            [det(*rng.uniform(0, 30, 2), 10, 10, float(rng.random())) for _ in range(7)]
            for _ in range(3)
        ]
        out = decision_fuse(lists, DecisionFuseConfig(merge_iou=0.4, nms_iou=0.5))
        assert len(out) <= 21

    def test_weighted_average_coordinates(self):
        lists = [[det(0, 0, 10, 10, 0.75)], [det(4, 0, 10, 10, 0.25)]]
        out = decision_fuse(lists, DecisionFuseConfig(merge_iou=0.3))
        assert len(out) == 1
        assert out[0].box.x == pytest.approx(1.0)  # (0*0.75 + 4*0.25)


class TestArtifacts:
    def test_dump_feature_map_zero_input_black(self, tiny_network, tmp_path):
        from PIL import Image

        # zero the first conv so conv2 activations vanish
        tiny_network.feature_layers[0].weight.data[...] = 0
        tiny_network.feature_layers[0].bias.data[...] = 0
        arr = np.full((3, 24, 24), 128.0, dtype=np.float32)
        path = dump_feature_map(tiny_network, arr, "conv2", tmp_path / "fm.png")
        img = np.asarray(Image.open(path))
        assert not img.any()

    def test_dump_dims_follow_feature_map(self, tiny_network, tmp_path):
        from PIL import Image

        arr = np.zeros((3, 24, 24), dtype=np.float32)
        feat = tiny_network.layer_activations(arr, "conv2")
        path = dump_feature_map(tiny_network, arr, "conv2", tmp_path / "fm.png")
        img = np.asarray(Image.open(path))
        assert img.shape == feat.shape[2:]

    def test_dump_deterministic(self, tiny_network, tmp_path):
        rng = np.random.default_rng(7)
        arr = (rng.random((3, 24, 24)) * 255).astype(np.float32)
        p1 = dump_feature_map(tiny_network, arr, "conv2", tmp_path / "a.png")
        p2 = dump_feature_map(tiny_network, arr, "conv2", tmp_path / "b.png")
        assert open(p1, "rb").read() == open(p2, "rb").read()

    def test_unknown_layer_is_config_error(self, tiny_network, tmp_path):
        with pytest.raises(ConfigurationError):
            dump_feature_map(tiny_network, np.zeros((3, 24, 24), np.float32),
                             "conv9", tmp_path / "x.png")

    def test_detections_csv_round_trip(self, tmp_path):
        dets = {"s/000001": [det(1.5, 2.25, 10, 12, 0.75)],
                "s/000002": [det(0, 0, 5, 5, 0.5), det(9, 9, 4, 4, 0.25)]}
        path = tmp_path / "dets.csv"
        write_detections_csv(dets, path)
        back = read_detections_csv(path)
        assert set(back) == set(dets)
        assert back["s/000002"][0].box.x == 0.0
        assert back["s/000001"][0].score == pytest.approx(0.75)


class TestComparisonTable:
    def test_rows_follow_mode_order(self):
        reports = [
            EvalReport(mode=FusionMode.THREE_CHANNEL, ap=0.9, top1=0.95,
                       proposal_seconds=0.1, network_seconds=0.05, overall_seconds=0.16),
            EvalReport(mode=FusionMode.VISIBLE_ONLY, ap=0.5, top1=0.6,
                       proposal_seconds=0.1, network_seconds=0.04, overall_seconds=0.15),
        ]
        rows = comparison_table(reports)
        assert [r[0] for r in rows] == ["visible_only", "three_channel"]
        text = format_table(rows)
        assert "three_channel" in text and "AP" in text

    def test_reference_numbers_documented(self):
        ref = SENSIAC_REFERENCE["three_channel"]
        assert ref == {"ap": 98.34, "top1": 98.90}


class TestEvaluateDetections:
    def test_combined_report(self):
        gts = {"a": [gt(0, 0, 10, 10, "a")], "b": [gt(0, 0, 10, 10, "b")]}
        dets = {"a": [det(0, 0, 10, 10, 0.9)], "b": [det(50, 50, 10, 10, 0.8)]}
        curve, top1 = evaluate_detections(dets, gts)
        assert curve.ap == pytest.approx(0.5)
        assert top1 == 0.5
