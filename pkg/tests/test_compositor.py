import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from headswap.compositor import composite, feathered_alpha, match_illumination
from headswap.errors import DimensionMismatch, InvalidArgument, InvalidGain


def square_mask(h=60, w=60, r0=10, r1=50, c0=10, c1=50):
    m = np.zeros((h, w))
    m[r0:r1, c0:c1] = 1.0
    return m


class TestIllumination:
    def test_equal_gains_unchanged(self, rng):
        img = rng.random((8, 8, 3))
        out = match_illumination(img, 0.7, 0.7)
        assert np.array_equal(out, img) and out is not img

    def test_doubling(self):
        assert match_illumination(np.array([0.3]), 2.0, 1.0)[0] == pytest.approx(0.6)

    def test_saturates(self):
        assert match_illumination(np.array([0.8]), 1.0, 0.5)[0] == 1.0

    @pytest.mark.parametrize("gains", [(0.0, 1.0), (1.0, -2.0), (float("nan"), 1.0)])
    def test_bad_gain(self, gains):
        with pytest.raises(InvalidGain):
            match_illumination(np.zeros(3), *gains)


class TestComposite:
    def test_empty_mask_is_frame(self, rng):
        frame, repl = rng.random((20, 30, 3)), rng.random((20, 30, 3))
        assert np.array_equal(composite(frame, repl, np.zeros((20, 30)), 5), frame)

    def test_hard_interior(self, rng):
        frame, repl = rng.random((60, 60, 3)), rng.random((60, 60, 3))
        m = square_mask()
        out = composite(frame, repl, m, 0)
        assert np.array_equal(out[m > 0], repl[m > 0])
        assert np.array_equal(out[m == 0], frame[m == 0])

    def test_ramp_midpoint(self):
        frame = np.zeros((60, 60, 3))
        repl = np.ones((60, 60, 3))
        m = square_mask()
        out = composite(frame, repl, m, 4)
        # Oracle: brute-force Euclidean distance to the nearest outside pixel, then the ramp formula.
        outside = np.argwhere(m == 0)
        r, c = 30, 48  # two pixels in from the right edge of the square
        d = np.sqrt(((outside - [r, c]) ** 2).sum(axis=1)).min()
        assert d == 2.0
        expected = min(1.0, d / 4)
        assert expected == 0.5
        assert out[r, c] == pytest.approx([0.5, 0.5, 0.5], abs=1 / 255)

    def test_feather_profile_matches_brute_force(self):
        m = square_mask()
        a = feathered_alpha(m, 5)
        outside = np.argwhere(np.pad(m, 1) == 0) - 1
        for r, c in [(10, 10), (11, 30), (12, 12), (30, 30), (14, 20)]:
            d = np.sqrt(((outside - [r, c]) ** 2).sum(axis=1)).min()
            assert a[r, c] == pytest.approx(min(1.0, d / 5), abs=1e-12)

    def test_image_border_counts_as_outside(self):
        a = feathered_alpha(np.ones((20, 20)), 4)
        assert a[0, 10] == 0.25 and a[10, 10] == 1.0

    def test_gray_frames(self, rng):
        frame, repl = rng.random((60, 60)), rng.random((60, 60))
        out = composite(frame, repl, square_mask(), 3)
        assert out.shape == frame.shape

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            composite(np.zeros((10, 10, 3)), np.zeros((10, 11, 3)), np.zeros((10, 10)))
        with pytest.raises(DimensionMismatch):
            composite(np.zeros((10, 10, 3)), np.zeros((10, 10, 3)), np.zeros((9, 10)))

    def test_negative_feather(self):
        with pytest.raises(InvalidArgument):
            composite(np.zeros((4, 4, 3)), np.zeros((4, 4, 3)), np.zeros((4, 4)), -1)


images = hnp.arrays(np.float64, (16, 16, 3), elements=st.floats(0, 1))
masks = hnp.arrays(np.float64, (16, 16), elements=st.sampled_from([0.0, 0.0, 0.25, 0.5, 1.0, 1.0, 1.0]))


@settings(max_examples=100, deadline=None)
@given(images, images, masks, st.integers(0, 8))
def test_outside_support_untouched_and_convex(frame, repl, mask, feather):
    out = composite(frame, repl, mask, feather)
    outside = mask == 0
    assert np.array_equal(out[outside], frame[outside])
    assert np.all(out >= np.minimum(frame, repl)) and np.all(out <= np.maximum(frame, repl))


@settings(max_examples=100, deadline=None)
@given(masks, st.integers(0, 10), st.integers(0, 10))
def test_alpha_monotone_in_feather(mask, f1, f2):
    lo, hi = sorted((f1, f2))
    assert np.all(feathered_alpha(mask, hi) <= feathered_alpha(mask, lo))


def test_row_split_matches_whole(rng):
    frame, repl = rng.random((40, 50, 3)), rng.random((40, 50, 3))
    m = square_mask(40, 50, 5, 35, 5, 45)
    whole = composite(frame, repl, m, 4)
    a = feathered_alpha(m, 4)[..., None]
    rows = [np.clip(a[i] * repl[i] + (1 - a[i]) * frame[i], np.minimum(frame[i], repl[i]), np.maximum(frame[i], repl[i])) for i in range(40)]
    rows = [np.where(a[i] == 0, frame[i], np.where(a[i] == 1, repl[i], r)) for i, r in enumerate(rows)]
    assert np.array_equal(whole, np.stack(rows))
