import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowforge.camera import SE3Pose, intrinsics_from_fovy, relative_transform
from flowforge.errors import DimensionError, DomainError, IndexingMismatchError
from flowforge.grid import DepthMap, FlowField, Indexing, bilinear_sample
from flowforge.render import render_next_frame
from flowforge.synthesis import synthesize_flow
from flowforge.warping import (
    backward_warp_image,
    canonical_grid,
    fourier_embed,
    target_embedding,
    warp_embedding,
)
from scenes import textured_image


def const_flow(h, w, u, v, indexing=Indexing.TARGET):
    return FlowField(np.dstack([np.full((h, w), float(u)), np.full((h, w), float(v))]), indexing)


class TestCanonicalGrid:
    def test_corners_and_centre(self):
        g = canonical_grid(3, 3)
        np.testing.assert_array_equal(g[0, 0], [-1, -1])
        np.testing.assert_array_equal(g[-1, -1], [1, 1])
        np.testing.assert_array_equal(g[1, 1], [0, 0])

    @pytest.mark.parametrize("w,h", [(2, 2), (5, 3), (64, 17)])
    def test_uniform_spacing(self, w, h):
        g = canonical_grid(w, h)
        assert g.shape == (h, w, 2)
        np.testing.assert_allclose(np.diff(g[0, :, 0]), 2 / (w - 1), rtol=0, atol=1e-15)
        np.testing.assert_allclose(np.diff(g[:, 0, 1]), 2 / (h - 1), rtol=0, atol=1e-15)

    def test_degenerate(self):
        with pytest.raises(DimensionError):
            canonical_grid(1, 4)


class TestFourierEmbed:
    def test_zero_coordinate(self):
        e = fourier_embed(np.zeros((1, 1, 2)), 4)
        np.testing.assert_array_equal(e[0, 0, :8], 0.0)
        np.testing.assert_array_equal(e[0, 0, 8:], 1.0)

    def test_half_coordinate_first_frequency(self):
        e = fourier_embed(np.array([[[0.5, 0.0]]]), 3)
        # Layout: sin x(k=0..2), sin y(k=0..2), cos x(k=0..2), cos y(k=0..2).
        assert e[0, 0, 0] == 1.0
        assert abs(e[0, 0, 6]) < 1e-15

    def test_channel_layout(self):
        x, y = 0.3, -0.7
        e = fourier_embed(np.array([[[x, y]]]), 2)[0, 0]
        expected = [
            math.sin(math.pi * x), math.sin(2 * math.pi * x),
            math.sin(math.pi * y), math.sin(2 * math.pi * y),
            math.cos(math.pi * x), math.cos(2 * math.pi * x),
            math.cos(math.pi * y), math.cos(2 * math.pi * y),
        ]
        np.testing.assert_allclose(e, expected, rtol=0, atol=1e-15)

    def test_default_channel_count(self):
        assert fourier_embed(canonical_grid(4, 4)).shape == (4, 4, 32)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 12), st.integers(2, 9), st.integers(2, 9))
    def test_bounded_with_channel_formula(self, n_freqs, w, h):
        e = fourier_embed(canonical_grid(w, h), n_freqs)
        assert e.shape == (h, w, 2 * 2 * n_freqs)
        assert np.all(np.abs(e) <= 1.0)

    def test_rejects_zero_frequencies(self):
        with pytest.raises(DomainError):
            fourier_embed(canonical_grid(3, 3), 0)


class TestWarp:
    def test_zero_flow_identity_image(self, rng):
        img = rng.uniform(0, 255, (9, 13, 3))
        out, valid = backward_warp_image(img, FlowField.zeros(9, 13))
        assert valid.all()
        np.testing.assert_array_equal(out, img)

    def test_zero_flow_identity_embedding(self):
        emb = fourier_embed(canonical_grid(10, 8))
        out, valid = warp_embedding(emb, FlowField.zeros(8, 10))
        assert valid.all()
        np.testing.assert_array_equal(out, emb)

    def test_integer_shift(self, rng):
        emb = rng.uniform(-1, 1, (6, 7, 4))
        out, valid = warp_embedding(emb, const_flow(6, 7, 1, 0))
        # Samples come from p - F(p) = (x - 1, y): the first column has no source.
        assert not valid[:, 0].any()
        assert valid[:, 1:].all()
        np.testing.assert_array_equal(out[:, 1:], emb[:, :-1])
        assert (out[:, 0] == 0).all()

    def test_negative_shift_invalidates_last_column(self, rng):
        emb = rng.uniform(-1, 1, (6, 7, 4))
        out, valid = warp_embedding(emb, const_flow(6, 7, -1, 0))
        assert not valid[:, -1].any()
        np.testing.assert_array_equal(out[:, :-1], emb[:, 1:])

    def test_constant_plane_shift(self):
        intr = intrinsics_from_fovy(29.2, 512, 512)
        shift = intr.fx * 1.0 / 10.0
        img = textured_image(512, 512)
        out, valid = backward_warp_image(img, const_flow(512, 512, -shift, 0))
        # I'(x) = I(x + 98.28): the right strip has no source.
        first_bad = int(np.floor(511 - shift)) + 1
        assert valid[:, :first_bad].all()
        assert not valid[:, first_bad:].any()
        xs = np.arange(first_bad) + shift
        ys = np.full_like(xs, 100.0)
        expected, _ = bilinear_sample(img, xs, ys)
        np.testing.assert_allclose(out[100, :first_bad], expected, rtol=0, atol=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-20, 20), st.floats(-20, 20), st.floats(0, 255), st.integers(0, 2**31))
    def test_constant_colour_preserved(self, u, v, value, seed):
        r = np.random.default_rng(seed)
        flow = FlowField(np.dstack([u + r.normal(0, 2, (8, 9)), v + r.normal(0, 2, (8, 9))]), Indexing.TARGET)
        out, valid = backward_warp_image(np.full((8, 9, 3), value), flow)
        np.testing.assert_allclose(out[valid], value, rtol=0, atol=1e-9 * max(1, value))
        assert (out[~valid] == 0).all()

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31))
    def test_validity_soundness(self, seed):
        r = np.random.default_rng(seed)
        h, w = 7, 11
        flow = FlowField(r.uniform(-6, 6, (h, w, 2)), Indexing.TARGET)
        _, valid = backward_warp_image(r.uniform(0, 255, (h, w, 1)), flow)
        ys, xs = np.mgrid[0:h, 0:w]
        sx = xs - flow.u
        sy = ys - flow.v
        inside = (sx >= 0) & (sx <= w - 1) & (sy >= 0) & (sy <= h - 1)
        np.testing.assert_array_equal(valid, inside)

    def test_source_indexed_flow_rejected(self):
        with pytest.raises(IndexingMismatchError):
            backward_warp_image(np.zeros((3, 3)), FlowField.zeros(3, 3, Indexing.SOURCE))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            backward_warp_image(np.zeros((3, 4)), FlowField.zeros(3, 3))

    def test_flow_valid_masks_output(self):
        valid_in = np.ones((4, 4), bool)
        valid_in[1, 2] = False
        out, valid = backward_warp_image(np.full((4, 4), 9.0), FlowField.zeros(4, 4), valid_in)
        np.testing.assert_array_equal(valid, valid_in)
        assert out[1, 2, 0] == 0


class TestSmoothWarpOfEmbedding:
    def test_direct_evaluation_oracle(self):
        h = w = 64
        n_freqs = 8
        ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
        u = 3.0 * np.sin(2 * np.pi * ys / h) + 1.5
        v = 2.0 * np.cos(2 * np.pi * xs / w) - 0.5
        flow = FlowField(np.dstack([u, v]), Indexing.TARGET)
        warped, valid = warp_embedding(fourier_embed(canonical_grid(w, h), n_freqs), flow)

        # Direct evaluation at the source coordinate's normalised position.
        sx = 2 * (xs - u) / (w - 1) - 1
        sy = 2 * (ys - v) / (h - 1) - 1
        direct = np.concatenate(
            [np.sin((2.0 ** np.arange(n_freqs)) * np.pi * sx[..., None]),
             np.sin((2.0 ** np.arange(n_freqs)) * np.pi * sy[..., None]),
             np.cos((2.0 ** np.arange(n_freqs)) * np.pi * sx[..., None]),
             np.cos((2.0 ** np.arange(n_freqs)) * np.pi * sy[..., None])],
            axis=-1,
        )
        # Each channel varies along one axis only; linear interpolation on a unit
        # lattice errs by at most max|f''| / 8 with f'' = omega^2 for unit sinusoids.
        for c in range(4 * n_freqs):
            k = c % n_freqs
            axis_len = w if (c // n_freqs) % 2 == 0 else h
            omega = (2.0**k) * np.pi * 2 / (axis_len - 1)
            bound = min(2.0, omega**2 / 8) + 1e-12
            err = np.abs(warped[..., c] - direct[..., c])[valid]
            assert err.max() <= bound, (c, err.max(), bound)
        assert valid.mean() > 0.8

    def test_reembed_variant_is_exact(self):
        h = w = 16
        flow = const_flow(h, w, 0.3, -0.6)
        _, target, valid = target_embedding(w, h, flow, 4, reembed=True)
        ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
        sx = 2 * (xs - 0.3) / (w - 1) - 1
        sy = 2 * (ys + 0.6) / (h - 1) - 1
        expected = fourier_embed(np.dstack([sx, sy]), 4)
        np.testing.assert_allclose(target[valid], expected[valid], rtol=0, atol=1e-12)


class TestCompositionConsistency:
    def test_backward_warp_reproduces_rendered_frame(self):
        h = w = 96
        intr = intrinsics_from_fovy(29.2, w, h)
        img = textured_image(h, w, seed=4)
        pose = relative_transform(SE3Pose.identity(), SE3Pose.from_camera_position([0.3, 0.0, 0.0]))
        flow, corr, valid = synthesize_flow(DepthMap(np.full((h, w), 6.0)), intr, pose)
        rendered = render_next_frame(img, corr)
        warped, wvalid = backward_warp_image(img, flow, valid)
        both = rendered.hole_mask & wvalid
        assert both.sum() > 0.8 * h * w
        assert np.max(np.abs(warped[both] - rendered.image[both])) <= 0.5
