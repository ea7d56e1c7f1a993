import os

import numpy as np
import pytest

from fusiondet.errors import InputError
from fusiondet.fusion import (
    FusionMode,
    ImagePlane,
    compute_motion,
    fuse,
    ingest_dataset,
    load_plane,
    load_sequence_samples,
    luma,
    network_input_scale,
    read_manifest,
    resize_fused,
    resize_plane,
    save_plane,
)


def plane(value, h=6, w=8):
    return ImagePlane(np.full((h, w), float(value), dtype=np.float32))


class TestComputeMotion:
    def test_identical_frames_zero(self):
        m = compute_motion(plane(90), plane(90))
        assert not m.base.values.any()

    def test_scalar_difference(self):
        m = compute_motion(plane(200), plane(50))
        assert np.all(m.base.values == 150.0)

    def test_swap_symmetry(self):
        rng = np.random.default_rng(0)
        a = ImagePlane(rng.integers(0, 256, (5, 7)).astype(np.float32))
        b = ImagePlane(rng.integers(0, 256, (5, 7)).astype(np.float32))
        np.testing.assert_array_equal(
            compute_motion(a, b).base.values, compute_motion(b, a).base.values
        )

    def test_bounded_range(self):
        rng = np.random.default_rng(1)
        a = ImagePlane(rng.integers(0, 256, (5, 7)).astype(np.float32))
        b = ImagePlane(rng.integers(0, 256, (5, 7)).astype(np.float32))
        m = compute_motion(a, b).base.values
        assert m.min() >= 0 and m.max() <= 255

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            compute_motion(plane(1, 4, 4), plane(1, 5, 5))


class TestFuse:
    def test_three_channel_assignment(self):
        fused = fuse(visible=plane(10), mwir=plane(30), motion=plane(20),
                     mode=FusionMode.THREE_CHANNEL)
        b, g, r = fused.planes
        assert np.all(b.values == 10)  # blue = visible
        assert np.all(g.values == 20)  # green = motion
        assert np.all(r.values == 30)  # red = MWIR

    def test_single_modality_replication(self):
        p = plane(77)
        for mode, kwargs in [
            (FusionMode.VISIBLE_ONLY, {"visible": p}),
            (FusionMode.MWIR_ONLY, {"mwir": p}),
            (FusionMode.MOTION_ONLY, {"motion": p}),
        ]:
            fused = fuse(mode=mode, **kwargs)
            for ch in fused.planes:
                np.testing.assert_array_equal(ch.values, p.values)

    def test_visible_mwir_layout(self):
        fused = fuse(visible=plane(5), mwir=plane(9), mode=FusionMode.VISIBLE_MWIR)
        b, g, r = fused.planes
        assert np.all(b.values == 5) and np.all(g.values == 5) and np.all(r.values == 9)

    def test_missing_plane_names_modality(self):
        with pytest.raises(InputError, match="mwir"):
            fuse(visible=plane(1), motion=plane(2), mode=FusionMode.THREE_CHANNEL)

    def test_pixel_values_never_modified(self):
        rng = np.random.default_rng(2)
        v = ImagePlane(rng.integers(0, 256, (6, 6)).astype(np.float32))
        m = ImagePlane(rng.integers(0, 256, (6, 6)).astype(np.float32))
        w = ImagePlane(rng.integers(0, 256, (6, 6)).astype(np.float32))
        fused = fuse(visible=v, mwir=w, motion=m, mode=FusionMode.THREE_CHANNEL)
        for src, out in zip((v, m, w), fused.planes):
            assert sorted(src.values.ravel()) == sorted(out.values.ravel())
            np.testing.assert_array_equal(src.values, out.values)

    def test_output_dims_match_input(self):
        fused = fuse(visible=plane(1, 12, 20), mwir=plane(2, 12, 20),
                     motion=plane(3, 12, 20), mode=FusionMode.THREE_CHANNEL)
        assert (fused.width, fused.height) == (20, 12)

    def test_decision_level_is_not_pixel_fusion(self):
        with pytest.raises(InputError):
            fuse(visible=plane(1), mode=FusionMode.DECISION_LEVEL)


def write_test_sequence(root, name, frames, gt_rows, mwir_frames=None):
    from PIL import Image

    seq = os.path.join(root, name)
    os.makedirs(os.path.join(seq, "visible"), exist_ok=True)
    os.makedirs(os.path.join(seq, "mwir"), exist_ok=True)
    for i, arr in enumerate(frames):
        Image.fromarray(arr.astype(np.uint8), "L").save(
            os.path.join(seq, "visible", f"{i:06d}.png"))
    for i, arr in enumerate(mwir_frames if mwir_frames is not None else frames):
        Image.fromarray(arr.astype(np.uint8), "L").save(
            os.path.join(seq, "mwir", f"{i:06d}.png"))
    with open(os.path.join(seq, "gt.csv"), "w") as fh:
        for row in gt_rows:
            fh.write(",".join(str(v) for v in row) + "\n")


class TestIngest:
    def test_ten_frames_give_nine_samples(self, tmp_path):
        rng = np.random.default_rng(0)
        frames = [rng.integers(0, 255, (16, 16)) for _ in range(10)]
        gt = [(i, 2, 2, 5, 5, 1) for i in range(10)]
        write_test_sequence(tmp_path, "seq_a", frames, gt)
        (tmp_path / "manifest.txt").write_text("seq_a train\n")
        ds = ingest_dataset(str(tmp_path))
        assert len(ds.train) == 9  # first frame has no motion predecessor
        assert ds.train[0].frame_index == 1
        assert ds.train[0].ground_truth[0].box.w == 5

    def test_misaligned_lengths_error(self, tmp_path):
        rng = np.random.default_rng(0)
        frames = [rng.integers(0, 255, (8, 8)) for _ in range(10)]
        write_test_sequence(tmp_path, "seq_b", frames, [], mwir_frames=frames[:9])
        (tmp_path / "manifest.txt").write_text("seq_b train\n")
        with pytest.raises(InputError, match="frames"):
            ingest_dataset(str(tmp_path))

    def test_empty_manifest_is_empty_dataset(self, tmp_path):
        (tmp_path / "manifest.txt").write_text("")
        ds = ingest_dataset(str(tmp_path))
        assert ds.train == [] and ds.test == []

    def test_motion_plane_matches_frame_difference(self, tmp_path):
        f0 = np.full((8, 8), 10)
        f1 = np.full((8, 8), 60)
        write_test_sequence(tmp_path, "seq_c", [f0, f1], [(1, 1, 1, 2, 2, 1)])
        (tmp_path / "manifest.txt").write_text("seq_c test\n")
        ds = ingest_dataset(str(tmp_path))
        assert np.all(ds.test[0].motion.base.values == 50)

    def test_bad_manifest_line(self, tmp_path):
        (tmp_path / "manifest.txt").write_text("seq_x validation\n")
        with pytest.raises(InputError):
            read_manifest(str(tmp_path))


class TestResize:
    def test_shortest_side_reaches_target(self):
        # 400x300 -> short side 300 doubles to 600; long side 800 under cap
        scale = network_input_scale(400, 300)
        assert 300 * scale == pytest.approx(600)
        assert network_input_scale(800, 600) == pytest.approx(1.0)

    def test_long_side_cap_engages(self):
        # 2000x500: target would need scale 1.2, but the long side caps it
        scale = network_input_scale(2000, 500)
        assert 2000 * scale == pytest.approx(1000)

    def test_default_target(self):
        scale = network_input_scale(320, 240)
        assert 240 * scale == pytest.approx(600)

    def test_identity_resize_copies(self):
        p = plane(42, 10, 10)
        q = resize_plane(p, 1.0)
        assert q.values is not p.values
        np.testing.assert_array_equal(q.values, p.values)

    def test_constant_plane_survives_interpolation(self):
        p = plane(99, 16, 24)
        q = resize_plane(p, 2.5)
        assert q.values.shape == (40, 60)
        np.testing.assert_allclose(q.values, 99.0)

    def test_resize_fused_reports_scale(self):
        fused = fuse(visible=plane(1, 120, 160), mwir=plane(2, 120, 160),
                     motion=plane(3, 120, 160), mode=FusionMode.THREE_CHANNEL)
        resized, scale = resize_fused(fused, target=240, cap=1000)
        assert scale == pytest.approx(2.0)
        assert (resized.height, resized.width) == (240, 320)
        assert resized.mode == FusionMode.THREE_CHANNEL


class TestPlanesIO:
    def test_png_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        p = ImagePlane(rng.integers(0, 256, (9, 11)).astype(np.float32))
        path = tmp_path / "p.png"
        save_plane(p, path)
        q = load_plane(path)
        np.testing.assert_array_equal(p.values, q.values)

    def test_rgb_input_collapses_to_luma(self, tmp_path):
        from PIL import Image

        rgb = np.zeros((4, 4, 3), dtype=np.uint8)
        rgb[..., 0] = 100
        path = tmp_path / "rgb.png"
        Image.fromarray(rgb, "RGB").save(path)
        p = load_plane(path)
        assert p.values.shape == (4, 4)
        np.testing.assert_allclose(p.values, 29.9)

    def test_luma_weights(self):
        rgb = np.ones((2, 2, 3)) * np.array([100.0, 50.0, 20.0])
        np.testing.assert_allclose(luma(rgb).values, 100 * 0.299 + 50 * 0.587 + 20 * 0.114)

    def test_unreadable_image_has_path_in_error(self, tmp_path):
        bad = tmp_path / "bad.png"
        bad.write_bytes(b"not a png")
        with pytest.raises(InputError, match="bad.png"):
            load_plane(bad)
