import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_frame
from goalienet.annotations import BBox, CropTransform, Keypoint2D
from goalienet.codec import (
    Heatmap,
    decode,
    decode_batch,
    encode,
    encode_frame,
    first_second_max,
    gaussian,
    image_to_heatmap,
    to_image_coords,
)

IDENTITY = CropTransform(BBox(0, 0, 64, 64), 64, 64)


def kp_at_cell(u, v, stride=4):
    """Image point whose heatmap coordinate under IDENTITY is (u, v)."""
    return Keypoint2D((u + 0.5) * stride, (v + 0.5) * stride, True)


class TestEncode:
    def test_absent_is_zero(self):
        h = encode(Keypoint2D(), IDENTITY)
        assert h.values.shape == (16, 16) and not h.values.any()

    def test_peak_and_neighbour(self):
        h = encode(kp_at_cell(5, 5), IDENTITY, stride=4, sigma=2.0)
        assert h.values[5, 5] == 1.0
        assert h.values[7, 5] == pytest.approx(math.exp(-4 / 8), abs=1e-15)
        assert h.values[7, 5] == pytest.approx(0.6065, abs=5e-5)

    def test_matches_formula(self):
        kp = Keypoint2D(13.3, 41.7, True)
        h = encode(kp, IDENTITY, stride=4, sigma=1.5).values
        u, v = 13.3 / 4 - 0.5, 41.7 / 4 - 0.5
        for cy in range(16):
            for cx in range(16):
                assert h[cy, cx] == pytest.approx(math.exp(-((cx - u) ** 2 + (cy - v) ** 2) / (2 * 1.5 ** 2)),
                                                  rel=1e-12, abs=1e-300)

    @pytest.mark.parametrize("sigma", [0.0, -1.0])
    def test_bad_sigma(self, sigma):
        with pytest.raises(ValueError):
            encode(kp_at_cell(1, 1), IDENTITY, sigma=sigma)

    def test_bad_stride(self):
        with pytest.raises(ValueError):
            encode(kp_at_cell(1, 1), IDENTITY, stride=0)

    @given(st.floats(0, 63.999), st.floats(0, 63.999), st.floats(0.5, 4.0))
    def test_argmax_is_nearest_cell(self, x, y, sigma):
        h = encode(Keypoint2D(x, y, True), IDENTITY, sigma=sigma).values
        u, v = x / 4 - 0.5, y / 4 - 0.5
        # exhaustive scan for the closest cell (first in row-major order on ties)
        best, best_d = None, math.inf
        for cy in range(16):
            for cx in range(16):
                d = (cx - u) ** 2 + (cy - v) ** 2
                if d < best_d:
                    best, best_d = (cx, cy), d
        got = np.unravel_index(np.argmax(h), h.shape)
        bx, by = best
        assert (int(got[1]), int(got[0])) == best or math.isclose(
            (got[1] - u) ** 2 + (got[0] - v) ** 2, (bx - u) ** 2 + (by - v) ** 2, rel_tol=1e-12)

    @given(st.floats(0, 63.999), st.floats(0, 63.999))
    def test_values_in_unit_interval(self, x, y):
        # on a 16x16 grid with sigma 2 nothing underflows, so values are in (0, 1]
        h = encode(Keypoint2D(x, y, True), IDENTITY, sigma=2.0).values
        assert np.all(h > 0) and np.all(h <= 1)

    def test_large_grid_may_underflow_to_zero(self):
        # far tails underflow in float64; values stay within [0, 1]
        t = CropTransform(BBox(0, 0, 256, 256), 256, 256)
        h = encode(Keypoint2D(0.5, 0.5, True), t, stride=1, sigma=2.0).values
        assert h.min() == 0.0 and h.max() <= 1.0

    def test_peak_below_one_off_grid(self):
        h = encode(Keypoint2D(21.0, 21.0, True), IDENTITY).values
        assert h.max() < 1.0

    # dyadic offsets keep every coordinate exact, so ties stay ties under a shift;
    # peaks stay off the border so all four neighbours exist in both maps
    @given(st.integers(4, 10), st.integers(4, 10), st.integers(-3, 3), st.integers(-3, 3),
           st.integers(0, 15).map(lambda k: k / 16), st.integers(0, 15).map(lambda k: k / 16))
    def test_translation_equivariance(self, u, v, du, dv, fu, fv):
        a = encode(kp_at_cell(u + fu, v + fv), IDENTITY).values
        b = encode(kp_at_cell(u + du + fu, v + dv + fv), IDENTITY).values
        # compare the interior window that both maps cover
        ys, xs = slice(max(0, -dv), 16 - max(0, dv)), slice(max(0, -du), 16 - max(0, du))
        ys2, xs2 = slice(ys.start + dv, ys.stop + dv), slice(xs.start + du, xs.stop + du)
        assert np.array_equal(a[ys, xs], b[ys2, xs2])
        pa, pb = decode(a), decode(b)
        assert pb[0] - pa[0] == du and pb[1] - pa[1] == dv

    def test_encode_frame_matches_encode(self, rng):
        pts = {i: (float(rng.uniform(0, 64)), float(rng.uniform(0, 64))) for i in range(1, 30) if i % 3}
        f = make_frame(pts, 64, 64)
        maps, mask = encode_frame(f, IDENTITY, 4, 2.0, dtype=np.float64)
        assert maps.shape == (29, 16, 16) and mask.shape == (29,)
        for i, kp in enumerate(f.keypoints):
            assert np.array_equal(maps[i], encode(kp, IDENTITY, 4, 2.0).values)
            assert mask[i] == float(kp.present)


class TestDecode:
    def test_two_peaks(self):
        h = np.zeros((10, 10))
        h[5, 5], h[7, 5] = 1.0, 0.9
        assert decode(h) == (5.0, 5.5)

    def test_symmetric_gaussian_tie_break(self):
        h = gaussian(8, 8, 16, 16, 2.0)
        p1, p2 = first_second_max(h)
        assert p1 == (8, 8) and p2 == (8, 7)
        assert decode(h) == (8.0, 7.75)

    def test_uniform_map(self):
        assert decode(np.full((4, 5), 0.3)) == (0.25, 0.0)

    def test_heatmap_object(self):
        h = np.zeros((6, 6))
        h[2, 3], h[2, 4] = 2.0, 1.0
        assert decode(Heatmap(h)) == (3.25, 2.0)

    @pytest.mark.parametrize("shape", [(1, 5), (5, 1), (4,)])
    def test_heatmap_needs_two_sides(self, shape):
        with pytest.raises(ValueError):
            Heatmap(np.zeros(shape))

    def test_heatmap_non_negative(self):
        with pytest.raises(ValueError):
            Heatmap(-np.ones((3, 3)))

    def test_local_rule(self):
        h = np.zeros((8, 8))
        h[2, 2], h[2, 3], h[6, 6] = 1.0, 0.9, 0.5
        assert decode(h) == (2.25, 2.0)
        # the adjacent 0.9 is not a local maximum; the distant 0.5 is
        assert decode(h, second="local") == (3.0, 3.0)
        with pytest.raises(ValueError):
            decode(h, second="other")

    @given(st.integers(0, 2 ** 32 - 1))
    def test_monotone_rescaling_invariance(self, seed):
        r = np.random.default_rng(seed)
        h = r.random((7, 9))
        for g in (lambda v: 3 * v + 1, np.sqrt, np.exp, lambda v: v ** 3):
            assert decode(g(h)) == decode(h)

    @given(st.integers(0, 2 ** 32 - 1))
    def test_batch_matches_single(self, seed):
        r = np.random.default_rng(seed)
        maps = r.integers(0, 4, (2, 3, 5, 6)).astype(np.float32)  # many ties
        out = decode_batch(maps)
        for i in range(2):
            for j in range(3):
                assert tuple(out[i, j]) == decode(maps[i, j])


class TestImageCoords:
    def test_identity_stride4(self):
        assert to_image_coords((5.0, 5.5), IDENTITY, 4) == (22.0, 24.0)

    def test_stride1(self):
        t = CropTransform(BBox(0, 0, 16, 16), 16, 16)
        assert to_image_coords((3.0, 7.25), t, 1) == (3.5, 7.75)

    def test_inverse_of_image_to_heatmap(self):
        t = CropTransform(BBox(13, 7, 213, 187), 256, 256)
        u, v = image_to_heatmap(100.0, 50.0, t, 4)
        assert to_image_coords((u, v), t, 4) == pytest.approx((100.0, 50.0), abs=1e-9)

    def test_round_trip_grid(self):
        t = CropTransform(BBox(20, 10, 276, 266), 256, 256)
        for u in range(2, 62, 7):
            for v in range(2, 62, 5):
                x, y = 20 + (u + 0.5) * 4, 10 + (v + 0.5) * 4
                hm = decode(encode(Keypoint2D(x, y, True), t))
                bx, by = to_image_coords(hm, t, 4)
                assert abs(bx - x) <= 0.5 * 4 and abs(by - y) <= 0.5 * 4
