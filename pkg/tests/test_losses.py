import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from splatpaint.errors import DimensionMismatch
from splatpaint.losses import (
    SSIM_C1,
    SSIM_C2,
    loss_weighted,
    loss_weighted_grad,
    ssim,
)


def reference_ssim_plain(x, y):
    """Direct per-window implementation: explicit loops, Gaussian 11x11
    window renormalized by its in-bounds mass at borders."""
    h, w, _ = x.shape
    half = 5
    ax = np.arange(11) - 5.0
    k1 = np.exp(-0.5 * (ax / 1.5) ** 2)
    k1 /= k1.sum()
    k2 = np.outer(k1, k1)
    total = 0.0
    for i in range(h):
        for j in range(w):
            i0, i1 = max(i - half, 0), min(i + half + 1, h)
            j0, j1 = max(j - half, 0), min(j + half + 1, w)
            win = k2[i0 - i + half:i1 - i + half, j0 - j + half:j1 - j + half]
            win = win / win.sum()
            for c in range(3):
                xs = x[i0:i1, j0:j1, c]
                ys = y[i0:i1, j0:j1, c]
                mx = (win * xs).sum()
                my = (win * ys).sum()
                vx = (win * xs * xs).sum() - mx * mx
                vy = (win * ys * ys).sum() - my * my
                cxy = (win * xs * ys).sum() - mx * my
                total += ((2 * mx * my + SSIM_C1) * (2 * cxy + SSIM_C2)) / (
                    (mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2)
                )
    return total / (h * w * 3)


def random_pair(seed, h=16, w=16):
    rng = np.random.default_rng(seed)
    return (
        rng.uniform(0, 1, (h, w, 3)),
        rng.uniform(0, 1, (h, w, 3)),
        rng.uniform(0, 1, (h, w)),
    )


class TestSsim:
    def test_self_similarity_is_one(self):
        x, _, w = random_pair(0)
        assert ssim(x, x.copy(), w) == pytest.approx(1.0, abs=1e-12)

    def test_symmetric(self):
        x, y, w = random_pair(1)
        assert ssim(x, y, w) == pytest.approx(ssim(y, x, w), abs=1e-12)

    def test_uniform_weights_match_plain_implementation(self):
        x, y, _ = random_pair(2, h=12, w=12)
        ours = ssim(x, y, np.ones((12, 12)))
        plain = reference_ssim_plain(x, y)
        assert ours == pytest.approx(plain, abs=1e-10)

    def test_all_zero_weights_rejected(self):
        x, y, _ = random_pair(3)
        with pytest.raises(ValueError, match="all-zero"):
            ssim(x, y, np.zeros((16, 16)))


class TestLossWeighted:
    def test_identity_is_zero(self):
        x, _, w = random_pair(4)
        assert loss_weighted(x, x.copy(), w) == 0.0

    def test_uniform_weights_reduce_to_plain_terms(self):
        x, y, _ = random_pair(5, h=12, w=12)
        w = np.ones((12, 12))
        l1 = np.abs(x - y).mean()
        dssim = (1.0 - reference_ssim_plain(x, y)) / 2.0
        expected = 0.8 * l1 + 0.2 * dssim
        assert loss_weighted(x, y, w) == pytest.approx(expected, abs=1e-10)

    def test_left_half_masked_equals_right_half_cropped(self):
        x, y, _ = random_pair(6)
        w = np.ones((16, 16))
        w[:, :8] = 0.0
        masked = loss_weighted(x, y, w)
        cropped = loss_weighted(x[:, 8:], y[:, 8:], np.ones((16, 8)))
        assert masked == pytest.approx(cropped, abs=1e-12)

    def test_all_zero_weights_rejected(self):
        x, y, _ = random_pair(7)
        with pytest.raises(ValueError, match="all-zero"):
            loss_weighted(x, y, np.zeros((16, 16)))

    def test_shape_mismatch_rejected(self):
        x, y, w = random_pair(8)
        with pytest.raises(DimensionMismatch):
            loss_weighted(x[:8], y, w)
        with pytest.raises(DimensionMismatch):
            loss_weighted(x, y, w[:8])


class TestLossGradient:
    def test_matches_finite_differences(self):
        x, y, w = random_pair(9)
        _, g = loss_weighted_grad(x, y, w)
        rng = np.random.default_rng(10)
        h = 1e-6
        for _ in range(40):
            i, j, c = rng.integers(16), rng.integers(16), rng.integers(3)
            yp = y.copy()
            yp[i, j, c] += h
            ym = y.copy()
            ym[i, j, c] -= h
            fd = (loss_weighted(x, yp, w) - loss_weighted(x, ym, w)) / (2 * h)
            assert g[i, j, c] == pytest.approx(fd, abs=1e-7)

    def test_zero_at_identity(self):
        x, _, w = random_pair(11)
        loss, g = loss_weighted_grad(x, x.copy(), w)
        assert loss == 0.0
        assert np.abs(g).max() <= 1e-15

    def test_zero_weight_pixels_are_inert(self):
        # perturbing the reference only where W == 0 changes nothing,
        # and the gradient is zero there
        x, y, w = random_pair(12)
        w[:, :8] = 0.0
        l0, g0 = loss_weighted_grad(x, y, w)
        x2 = x.copy()
        x2[:, :8] = np.random.default_rng(13).uniform(0, 1, (16, 8, 3))
        l1, g1 = loss_weighted_grad(x2, y, w)
        assert l0 == l1
        assert np.array_equal(g0, g1)
        assert np.all(g0[:, :8] == 0.0)

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_loss_nonnegative_and_grad_finite(self, seed):
        x, y, w = random_pair(seed, h=10, w=10)
        w = w + 1e-3  # keep at least some mass
        loss, g = loss_weighted_grad(x, y, w)
        assert loss >= 0.0
        assert np.all(np.isfinite(g))
