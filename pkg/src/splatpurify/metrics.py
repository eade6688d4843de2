"""Image fidelity metrics (PSNR, SSIM) and the purification score."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


def _check_pair(reference: np.ndarray, candidate: np.ndarray):
    reference = np.asarray(reference, dtype=np.float64)
    candidate = np.asarray(candidate, dtype=np.float64)
    if reference.shape != candidate.shape:
        raise ValueError(f"image shapes differ: {reference.shape} vs {candidate.shape}")
    if reference.ndim != 3 or reference.shape[2] != 3:
        raise ValueError(f"images must be (H, W, 3), got {reference.shape}")
    if not (np.all(np.isfinite(reference)) and np.all(np.isfinite(candidate))):
        raise ValueError("images contain NaN or Inf")
    return reference, candidate


def psnr(reference: np.ndarray, candidate: np.ndarray) -> float:
    """10 log10(1 / MSE) for unit dynamic range, capped at 100 dB."""
    reference, candidate = _check_pair(reference, candidate)
    mse = float(np.mean((reference - candidate) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP_DB)


def _gaussian_kernel() -> np.ndarray:
    half = SSIM_WINDOW // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-(x**2) / (2.0 * SSIM_SIGMA**2))
    return k / k.sum()


def _window_mean(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    half = SSIM_WINDOW // 2
    out = correlate1d(img, kernel, axis=0, mode="constant")
    out = correlate1d(out, kernel, axis=1, mode="constant")
    return out[half:-half, half:-half]


def ssim(reference: np.ndarray, candidate: np.ndarray) -> float:
    """Structural similarity with an 11x11 Gaussian window (sigma 1.5),
    computed per channel over the valid region and averaged."""
    reference, candidate = _check_pair(reference, candidate)
    if reference.shape[0] < SSIM_WINDOW or reference.shape[1] < SSIM_WINDOW:
        raise ValueError(
            f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {reference.shape[:2]}"
        )
    kernel = _gaussian_kernel()
    values = []
    for c in range(3):
        x = reference[:, :, c]
        y = candidate[:, :, c]
        mu_x = _window_mean(x, kernel)
        mu_y = _window_mean(y, kernel)
        var_x = _window_mean(x * x, kernel) - mu_x**2
        var_y = _window_mean(y * y, kernel) - mu_y**2
        cov_xy = _window_mean(x * y, kernel) - mu_x * mu_y
        ssim_map = ((2 * mu_x * mu_y + SSIM_C1) * (2 * cov_xy + SSIM_C2)) / (
            (mu_x**2 + mu_y**2 + SSIM_C1) * (var_x + var_y + SSIM_C2)
        )
        values.append(ssim_map.mean())
    return float(np.mean(values))


@dataclass(frozen=True)
class ScoreInputs:
    """PSNRs (dB) of the scene and extracted watermark, before and after
    purification."""

    baseline_scene: float
    baseline_message: float
    purified_scene: float
    purified_message: float

    def __post_init__(self):
        for name in ("baseline_scene", "baseline_message", "purified_scene", "purified_message"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


def score(inputs: ScoreInputs) -> float:
    """Watermark PSNR drop minus scene PSNR drop; higher is better."""
    d_message = inputs.baseline_message - inputs.purified_message
    d_scene = inputs.baseline_scene - inputs.purified_scene
    return d_message - d_scene
