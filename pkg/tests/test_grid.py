import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowforge.errors import DimensionError, FormatError, HeaderError, MagicError, TruncatedFileError
from flowforge.grid import (
    DepthMap,
    FlowField,
    Indexing,
    bilinear_sample,
    center_crop_resize,
    center_crop_resize_depth,
    center_crop_resize_flow,
    read_depth,
    read_image,
    read_pfm,
    resize_flow,
    write_image,
    write_pfm,
)
from oracles import bilinear_scalar


class TestBilinearSample:
    def test_integer_coordinate_is_exact(self, rng):
        img = rng.uniform(0, 255, (6, 5, 3))
        val, inside = bilinear_sample(img, 2.0, 3.0)
        assert inside
        np.testing.assert_array_equal(val, img[3, 2])

    def test_midpoint_between_0_and_10(self):
        img = np.array([[0.0, 10.0]])
        img = np.vstack([img, img])
        val, inside = bilinear_sample(img, 0.5, 0.0)
        assert inside
        assert val[0] == 5.0

    def test_outside_is_flagged_and_zero(self):
        img = np.full((3, 3), 9.0)
        val, inside = bilinear_sample(img, -0.5, 0.0)
        assert not inside
        assert val[0] == 0.0

    def test_far_border_is_inside(self, rng):
        img = rng.uniform(0, 255, (4, 7))
        val, inside = bilinear_sample(img, 6.0, 3.0)
        assert inside and val[0] == img[3, 6]
        _, inside = bilinear_sample(img, 6.0 + 1e-9, 3.0)
        assert not inside

    def test_non_finite_coordinates_are_outside(self):
        val, inside = bilinear_sample(np.ones((3, 3)), np.array([np.nan, np.inf]), np.array([1.0, 1.0]))
        assert not inside.any()
        assert (val == 0).all()

    def test_matches_scalar_oracle(self, rng):
        img = rng.uniform(0, 255, (9, 11))
        xs = rng.uniform(0, 10, 200)
        ys = rng.uniform(0, 8, 200)
        vals, inside = bilinear_sample(img, xs, ys)
        assert inside.all()
        expected = [bilinear_scalar(img, x, y) for x, y in zip(xs, ys)]
        np.testing.assert_allclose(vals[:, 0], expected, rtol=0, atol=1e-10)

    @settings(max_examples=60, deadline=None)
    @given(
        st.integers(2, 8),
        st.integers(2, 8),
        st.floats(0, 1, allow_nan=False),
        st.floats(0, 1, allow_nan=False),
        st.integers(0, 2**31 - 1),
    )
    def test_convex_in_neighbours(self, h, w, fx, fy, seed):
        img = np.random.default_rng(seed).uniform(0, 255, (h, w))
        x = fx * (w - 1)
        y = fy * (h - 1)
        val, inside = bilinear_sample(img, x, y)
        assert inside
        x0, y0 = min(int(x), w - 2), min(int(y), h - 2)
        patch = img[y0 : y0 + 2, x0 : x0 + 2]
        assert patch.min() - 1e-9 <= val[0] <= patch.max() + 1e-9


class TestCenterCropResize:
    def test_identity_at_target_size(self, rng):
        img = rng.uniform(0, 255, (512, 512, 3))
        np.testing.assert_array_equal(center_crop_resize(img, 512), img)

    def test_wide_image_is_cropped_without_resampling(self, rng):
        img = rng.uniform(0, 255, (512, 1024, 3))
        out = center_crop_resize(img, 512)
        # Index-offset copy oracle.
        np.testing.assert_array_equal(out, img[:, 256:768])

    def test_tall_image_crop_offsets(self, rng):
        img = rng.uniform(0, 255, (9, 4))
        out = center_crop_resize(img, 4)
        np.testing.assert_array_equal(out[..., 0], img[2:6])

    def test_constant_stays_constant(self):
        img = np.full((2, 4, 3), 7.0)
        out = center_crop_resize(img, 2)
        assert out.shape == (2, 2, 3)
        assert (out == 7.0).all()

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 40), st.integers(1, 40), st.integers(1, 30), st.floats(0, 255))
    def test_constant_invariance_any_size(self, h, w, target, value):
        out = center_crop_resize(np.full((h, w), value), target)
        assert out.shape == (target, target, 1)
        np.testing.assert_allclose(out, value, rtol=0, atol=1e-9 * max(1.0, value))

    def test_rejects_bad_target(self):
        with pytest.raises(DimensionError):
            center_crop_resize(np.ones((4, 4)), 0)

    def test_rejects_empty_image(self):
        with pytest.raises(DimensionError):
            center_crop_resize(np.ones((0, 4)), 2)


class TestFlowResize:
    @pytest.mark.parametrize("s", [0.5, 2.0, 3.0])
    def test_constant_flow_scales_by_factor(self, s):
        flow = FlowField(np.dstack([np.full((8, 8), 1.5), np.full((8, 8), -2.0)]), Indexing.TARGET)
        n = int(8 * s)
        out = resize_flow(flow, n, n)
        np.testing.assert_allclose(out.u, 1.5 * s)
        np.testing.assert_allclose(out.v, -2.0 * s)
        assert out.indexing == Indexing.TARGET

    def test_anisotropic_resize_scales_each_axis(self):
        flow = FlowField(np.dstack([np.ones((4, 8)), np.ones((4, 8))]), Indexing.SOURCE)
        out = resize_flow(flow, 12, 4)
        np.testing.assert_allclose(out.u, 0.5)
        np.testing.assert_allclose(out.v, 3.0)

    def test_center_crop_resize_flow(self):
        flow = FlowField(np.dstack([np.full((10, 20), 4.0), np.full((10, 20), 2.0)]), Indexing.TARGET)
        out = center_crop_resize_flow(flow, 5)
        assert out.shape == (5, 5)
        np.testing.assert_allclose(out.u, 2.0)
        np.testing.assert_allclose(out.v, 1.0)


class TestDepth:
    def test_from_array_marks_invalid_and_clamps(self):
        d = DepthMap.from_array(np.array([[0.0, -1.0], [np.nan, 100.0]]), max_depth=80)
        np.testing.assert_array_equal(d.valid, [[False, False], [False, True]])
        assert d.data[1, 1] == 80.0

    def test_resize_propagates_holes(self):
        raw = np.full((8, 8), 10.0)
        raw[3, 3] = 0.0
        out = center_crop_resize_depth(DepthMap.from_array(raw), 4)
        assert not out.valid.all()
        assert out.valid.sum() >= 12
        np.testing.assert_allclose(out.data[out.valid], 10.0)

    def test_depth_crop_without_resize_is_copy(self, rng):
        raw = rng.uniform(1, 50, (6, 10))
        out = center_crop_resize_depth(DepthMap.from_array(raw), 6)
        np.testing.assert_array_equal(out.data, raw[:, 2:8])

    def test_read_depth_npy(self, tmp_path):
        np.save(tmp_path / "d.npy", np.array([[1.0, 200.0], [0.0, 5.0]], dtype=np.float32))
        d = read_depth(tmp_path / "d.npy")
        np.testing.assert_array_equal(d.data, [[1.0, 80.0], [0.0, 5.0]])

    def test_read_depth_png_scale(self, tmp_path):
        import cv2

        raw = np.array([[256, 512], [0, 2560]], dtype=np.uint16)
        cv2.imwrite(str(tmp_path / "d.png"), raw)
        d = read_depth(tmp_path / "d.png")
        np.testing.assert_array_equal(d.data, [[1.0, 2.0], [0.0, 10.0]])


class TestPfm:
    def test_round_trip_little_endian(self, tmp_path, rng):
        data = rng.uniform(0, 80, (5, 7)).astype(np.float32)
        write_pfm(tmp_path / "a.pfm", data)
        np.testing.assert_array_equal(read_pfm(tmp_path / "a.pfm"), data)

    def test_big_endian_and_bottom_up_rows(self, tmp_path):
        data = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]], dtype=np.float32)
        # Hand-built big-endian file: positive scale, rows stored bottom-up.
        blob = b"Pf\n2 3\n1.0\n" + data[::-1].astype(">f4").tobytes()
        (tmp_path / "b.pfm").write_bytes(blob)
        np.testing.assert_array_equal(read_pfm(tmp_path / "b.pfm"), data)

    def test_color_pfm(self, tmp_path, rng):
        data = rng.uniform(0, 1, (3, 4, 3)).astype(np.float32)
        write_pfm(tmp_path / "c.pfm", data)
        np.testing.assert_array_equal(read_pfm(tmp_path / "c.pfm"), data)

    @pytest.mark.parametrize(
        "blob,err",
        [
            (b"P6\n2 2\n-1\n" + bytes(16), MagicError),
            (b"Pf\n2 2\n-1\n" + bytes(8), TruncatedFileError),
            (b"Pf\nx y\n-1\n", HeaderError),
            (b"Pf\n2", TruncatedFileError),
        ],
    )
    def test_rejects_corrupt(self, tmp_path, blob, err):
        (tmp_path / "x.pfm").write_bytes(blob)
        with pytest.raises(err):
            read_pfm(tmp_path / "x.pfm")


class TestImageIO:
    def test_png_round_trip_rgb_order(self, tmp_path):
        img = np.zeros((2, 3, 3))
        img[0, 0] = (255, 0, 0)
        img[1, 2] = (10, 20, 30)
        write_image(tmp_path / "a.png", img)
        np.testing.assert_array_equal(read_image(tmp_path / "a.png"), img)

    def test_write_clips_and_rounds(self, tmp_path):
        write_image(tmp_path / "b.png", np.array([[-5.0, 300.0, 12.6]]))
        np.testing.assert_array_equal(read_image(tmp_path / "b.png")[..., 0], [[0, 255, 13]])

    def test_unreadable_image(self, tmp_path):
        (tmp_path / "c.png").write_bytes(b"not a png")
        with pytest.raises(FormatError):
            read_image(tmp_path / "c.png")
