import numpy as np
import pytest

from splatpurify.metrics import ScoreInputs, psnr, score, ssim


def gaussian_kernel_2d():
    x = np.arange(-5, 6, dtype=np.float64)
    k = np.exp(-(x**2) / (2 * 1.5**2))
    k /= k.sum()
    return np.outer(k, k)


def ssim_reference(reference, candidate):
    """Brute-force sliding-window SSIM, the independent oracle."""
    kernel = gaussian_kernel_2d()
    c1, c2 = 0.01**2, 0.03**2
    h, w, _ = reference.shape
    channel_means = []
    for c in range(3):
        values = []
        for i in range(h - 10):
            for j in range(w - 10):
                wx = reference[i : i + 11, j : j + 11, c]
                wy = candidate[i : i + 11, j : j + 11, c]
                mux = (kernel * wx).sum()
                muy = (kernel * wy).sum()
                vx = (kernel * wx * wx).sum() - mux**2
                vy = (kernel * wy * wy).sum() - muy**2
                cov = (kernel * wx * wy).sum() - mux * muy
                values.append(
                    ((2 * mux * muy + c1) * (2 * cov + c2))
                    / ((mux**2 + muy**2 + c1) * (vx + vy + c2))
                )
        channel_means.append(np.mean(values))
    return float(np.mean(channel_means))


def checkerboard(n=32, lo=0.25, hi=0.75):
    grid = np.indices((n, n)).sum(axis=0) % 2
    img = np.where(grid[:, :, None] == 0, lo, hi)
    return img * np.ones((1, 1, 3))


class TestPsnr:
    def test_identical_images_capped(self, rng):
        img = rng.uniform(0, 1, (16, 16, 3))
        assert psnr(img, img) == 100.0

    def test_constant_images_closed_form(self):
        a = np.zeros((8, 8, 3))
        b = np.full((8, 8, 3), 0.5)
        assert psnr(a, b) == pytest.approx(10 * np.log10(1 / 0.25), abs=1e-12)

    def test_symmetry(self, rng):
        a = rng.uniform(0, 1, (12, 12, 3))
        b = rng.uniform(0, 1, (12, 12, 3))
        assert psnr(a, b) == psnr(b, a)

    def test_shape_mismatch_rejected(self, rng):
        with pytest.raises(ValueError, match="shapes"):
            psnr(rng.uniform(0, 1, (8, 8, 3)), rng.uniform(0, 1, (8, 9, 3)))

    def test_non_finite_rejected(self):
        bad = np.full((8, 8, 3), np.nan)
        with pytest.raises(ValueError, match="NaN"):
            psnr(bad, bad)

    def test_monotone_decreasing_under_noise(self):
        reference = np.random.default_rng(0).uniform(0.2, 0.8, (24, 24, 3))
        means = []
        for sigma in (0.01, 0.02, 0.05):
            values = []
            for seed in range(10):
                noise = np.random.default_rng(seed + 1).normal(0, sigma, reference.shape)
                values.append(psnr(reference, np.clip(reference + noise, 0, 1)))
            means.append(np.mean(values))
        assert means[0] > means[1] > means[2]


class TestSsim:
    def test_identical_images(self, rng):
        img = rng.uniform(0, 1, (16, 16, 3))
        assert ssim(img, img) == pytest.approx(1.0)

    def test_matches_brute_force_reference(self, rng):
        a = rng.uniform(0, 1, (18, 20, 3))
        b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
        assert ssim(a, b) == pytest.approx(ssim_reference(a, b), abs=1e-10)

    def test_negative_for_inverted_structure(self):
        img = checkerboard()
        assert ssim(img, 1.0 - img) < 0
        assert ssim(img, 1.0 - img) == pytest.approx(ssim_reference(img, 1.0 - img), abs=1e-10)

    def test_symmetry(self, rng):
        a = rng.uniform(0, 1, (14, 14, 3))
        b = rng.uniform(0, 1, (14, 14, 3))
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)

    def test_one_pixel_shift_sensitivity(self):
        img = checkerboard(24)
        shifted = np.roll(img, 1, axis=1)
        assert ssim(img, img) - ssim(img, shifted) >= 0.05

    def test_window_size_requirement(self, rng):
        small = rng.uniform(0, 1, (10, 10, 3))
        with pytest.raises(ValueError, match="11"):
            ssim(small, small)


class TestScore:
    def test_reference_row_arithmetic(self):
        # baseline scene/message 24.43/28.99, purified 23.20/8.27:
        # (28.99 - 8.27) - (24.43 - 23.20) = 19.49
        inputs = ScoreInputs(
            baseline_scene=24.43,
            baseline_message=28.99,
            purified_scene=23.20,
            purified_message=8.27,
        )
        assert score(inputs) == pytest.approx(19.49, abs=1e-9)

    def test_no_change_scores_zero(self):
        inputs = ScoreInputs(20.0, 25.0, 20.0, 25.0)
        assert score(inputs) == 0.0

    def test_scene_degradation_sign(self):
        inputs = ScoreInputs(
            baseline_scene=25.0, baseline_message=30.0, purified_scene=24.0, purified_message=30.0
        )
        assert score(inputs) == pytest.approx(-1.0)

    def test_affine_in_message_psnr(self, rng):
        for _ in range(20):
            b_s, b_m, p_s, p_m = rng.uniform(5, 40, 4)
            c = rng.uniform(-10, 10)
            base = score(ScoreInputs(b_s, b_m, p_s, p_m))
            shifted = score(ScoreInputs(b_s, b_m + c, p_s, p_m + c))
            assert shifted == pytest.approx(base, abs=1e-9)

    def test_finite_validation(self):
        with pytest.raises(ValueError, match="finite"):
            ScoreInputs(np.inf, 1.0, 1.0, 1.0)
