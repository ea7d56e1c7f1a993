import numpy as np
import pytest

from fusiondet.boxes import BBox, Detection, iou, nms
from fusiondet.detector import (
    BBoxDelta,
    DetectConfig,
    SamplerConfig,
    bbox_loss,
    classification_loss,
    decode_delta,
    decode_deltas_array,
    detect_on_proposals,
    encode_delta,
    encode_deltas_array,
    joint_loss,
    sample_rois,
    smooth_l1,
)
from fusiondet.boxes import GroundTruthBox
from fusiondet.errors import InputError

from .conftest import make_tiny_network


class TestDeltaCoding:
    def test_identity(self):
        b = BBox(3, 4, 10, 12)
        d = encode_delta(b, b)
        assert d.as_array() == pytest.approx([0, 0, 0, 0])

    def test_half_width_shift(self):
        d = encode_delta(BBox(0, 0, 10, 10), BBox(5, 0, 10, 10))
        assert d.t_x == pytest.approx(0.5)
        assert (d.t_y, d.t_w, d.t_h) == (0.0, 0.0, 0.0)

    def test_round_trip_property(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            p = BBox(*rng.uniform(0, 50, 2), *rng.uniform(1, 40, 2))
            g = BBox(*rng.uniform(0, 50, 2), *rng.uniform(1, 40, 2))
            back = decode_delta(p, encode_delta(p, g))
            assert abs(back.x - g.x) < 1e-6
            assert abs(back.y - g.y) < 1e-6
            assert abs(back.w - g.w) < 1e-6
            assert abs(back.h - g.h) < 1e-6

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(1)
        p = np.column_stack([rng.uniform(0, 50, 8), rng.uniform(0, 50, 8),
                             rng.uniform(1, 40, 8), rng.uniform(1, 40, 8)])
        g = np.column_stack([rng.uniform(0, 50, 8), rng.uniform(0, 50, 8),
                             rng.uniform(1, 40, 8), rng.uniform(1, 40, 8)])
        deltas = encode_deltas_array(p, g)
        for i in range(8):
            d = encode_delta(BBox(*p[i]), BBox(*g[i]))
            np.testing.assert_allclose(deltas[i], d.as_array(), rtol=1e-12)
        back = decode_deltas_array(p, deltas)
        np.testing.assert_allclose(back, g, atol=1e-9)

    def test_decode_floors_extent_at_one_pixel(self):
        decoded = decode_delta(BBox(0, 0, 10, 10), BBoxDelta(0, 0, -30.0, -30.0))
        assert decoded.w == 1.0 and decoded.h == 1.0

    def test_non_finite_delta_rejected(self):
        with pytest.raises(InputError):
            BBoxDelta(np.nan, 0, 0, 0)


class TestLosses:
    def test_certain_prediction_zero_loss(self):
        assert classification_loss([0.0, 1.0], 1) == 0.0

    def test_half_probability(self):
        assert classification_loss([0.5, 0.5], 1) == pytest.approx(0.693147, abs=1e-6)

    def test_exp_minus_two(self):
        p = np.exp(-2.0)
        assert classification_loss([1 - p, p], 1) == pytest.approx(2.0, abs=1e-12)

    def test_zero_probability_clamped(self):
        loss = classification_loss([1.0, 0.0], 1)
        assert np.isfinite(loss) and loss == pytest.approx(-np.log(1e-12))

    def test_smooth_l1_branches(self):
        assert smooth_l1(np.array(0.5)) == pytest.approx(0.125)
        assert smooth_l1(np.array(2.0)) == pytest.approx(1.5)
        assert smooth_l1(np.array(-2.0)) == pytest.approx(1.5)
        assert smooth_l1(np.array(0.0)) == 0.0

    def test_bbox_loss_examples(self):
        t = BBoxDelta(0.5, 0, 0, 0)
        v = BBoxDelta(0, 0, 0, 0)
        assert bbox_loss(t, t) == 0.0
        assert bbox_loss(t, v) == pytest.approx(0.125)
        assert bbox_loss(BBoxDelta(2, 0, 0, 0), v) == pytest.approx(1.5)

    def test_joint_loss_background_ignores_boxes(self):
        t = BBoxDelta(3, 3, 3, 3)
        v = BBoxDelta(0, 0, 0, 0)
        assert joint_loss([0.5, 0.5], 0, t, v) == classification_loss([0.5, 0.5], 0)

    def test_joint_loss_foreground_sum(self):
        t = BBoxDelta(0.5, 0, 0, 0)
        v = BBoxDelta(0, 0, 0, 0)
        expected = 0.693147 + 0.125
        assert joint_loss([0.5, 0.5], 1, t, v, lam=1.0) == pytest.approx(expected, abs=1e-6)

    def test_lambda_zero_disables_box_term(self):
        t = BBoxDelta(0.5, 0, 0, 0)
        v = BBoxDelta(0, 0, 0, 0)
        assert joint_loss([0.5, 0.5], 1, t, v, lam=0.0) == pytest.approx(0.693147, abs=1e-6)


def _gt(box, image_id="img0"):
    return GroundTruthBox(box=box, class_id=1, image_id=image_id)


class TestSampleRois:
    def test_exact_gt_proposal_is_foreground_identity(self):
        gt = BBox(10, 10, 20, 20)
        rng = np.random.default_rng(0)
        cfg = SamplerConfig(rois_per_image=4, fg_fraction=0.25)
        samples = sample_rois([gt], [_gt(gt)], cfg, rng)
        fg = [s for s in samples if s.label == 1]
        assert fg
        assert fg[0].target_delta.as_array() == pytest.approx([0, 0, 0, 0])

    def test_fg_quota_respected(self):
        rng = np.random.default_rng(1)
        gt = BBox(40, 40, 20, 20)
        proposals = [BBox(40 + dx, 40 + dy, 20, 20) for dx in range(-2, 3) for dy in range(-2, 3)]
        proposals += [BBox(float(x), 0, 10, 10) for x in range(0, 80, 5)]
        cfg = SamplerConfig(rois_per_image=64, fg_fraction=0.25,
                            bg_iou_range=(0.0, 0.5))
        samples = sample_rois(proposals, [_gt(gt)], cfg, rng)
        assert len(samples) == 64
        n_fg = sum(1 for s in samples if s.label == 1)
        assert n_fg <= 16
        assert sum(1 for s in samples if s.label == 0) >= 48

    def test_iou_threshold_labels(self):
        rng = np.random.default_rng(2)
        gt = BBox(0, 0, 10, 10)
        # IoU with gt = 30/170 ~ 0.176 -> background under [0.1, 0.5)
        prop = BBox(0, 7, 10, 10)
        assert iou(prop, gt) == pytest.approx(30 / 170)
        cfg = SamplerConfig(rois_per_image=8, fg_fraction=0.25, bg_iou_range=(0.1, 0.5))
        samples = sample_rois([prop], [_gt(gt)], cfg, rng)
        bg_boxes = [s.roi for s in samples if s.label == 0]
        assert prop in bg_boxes

    def test_fg_labels_have_targets_bg_do_not(self):
        rng = np.random.default_rng(3)
        gt = BBox(5, 5, 12, 12)
        cfg = SamplerConfig(rois_per_image=6, fg_fraction=0.5, bg_iou_range=(0.0, 0.5))
        samples = sample_rois([BBox(0, 0, 4, 4)], [_gt(gt)], cfg, rng)
        for s in samples:
            if s.label == 1:
                assert s.target_delta is not None
            else:
                assert s.target_delta is None

    def test_no_gt_is_input_error(self):
        with pytest.raises(InputError):
            sample_rois([BBox(0, 0, 5, 5)], [], SamplerConfig(), np.random.default_rng(0))


class TestNms:
    def test_survivors_pairwise_below_threshold(self):
        rng = np.random.default_rng(4)
        dets = [
            Detection(box=BBox(*rng.uniform(0, 30, 2), *rng.uniform(5, 20, 2)),
                      score=float(rng.random()))
            for _ in range(40)
        ]
        kept = nms(dets, 0.3)
        for i, a in enumerate(kept):
            for b in kept[i + 1:]:
                assert iou(a.box, b.box) < 0.3
        assert set(id(d) for d in kept) <= set(id(d) for d in dets)

    def test_highest_score_kept(self):
        a = Detection(box=BBox(0, 0, 10, 10), score=0.9)
        b = Detection(box=BBox(1, 1, 10, 10), score=0.5)
        kept = nms([b, a], 0.3)
        assert kept[0].score == 0.9 and len(kept) == 1


class TestDetect:
    def test_zero_proposals_empty(self, tiny_network):
        out = detect_on_proposals(tiny_network, np.zeros((3, 24, 24), np.float32),
                                  [], DetectConfig())
        assert out == []

    def test_score_threshold_one_filters_everything(self, tiny_network):
        rng = np.random.default_rng(5)
        arr = (rng.random((3, 24, 24)) * 255).astype(np.float32)
        props = [BBox(0, 0, 24, 24), BBox(4, 4, 12, 12)]
        out = detect_on_proposals(tiny_network, arr, props,
                                  DetectConfig(score_threshold=1.0))
        assert out == []

    def test_detections_sorted_and_clipped(self):
        net = make_tiny_network(seed=3)
        rng = np.random.default_rng(6)
        arr = (rng.random((3, 32, 32)) * 255).astype(np.float32)
        props = [BBox(0, 0, 32, 32), BBox(2, 2, 20, 20), BBox(10, 10, 18, 18)]
        out = detect_on_proposals(net, arr, props, DetectConfig(score_threshold=-1.0))
        scores = [d.score for d in out]
        assert scores == sorted(scores, reverse=True)
        for d in out:
            assert 0 <= d.box.x and d.box.x + d.box.w <= 32
            assert 0 <= d.box.y and d.box.y + d.box.h <= 32
