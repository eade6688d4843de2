"""Real spherical-harmonic color evaluation, degrees 0-3, 3DGS basis order."""
from __future__ import annotations

import numpy as np

C0 = 0.28209479177387814
C1 = 0.4886025119029199
C2 = [
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
]
C3 = [
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
]

MAX_DEGREE = 3


def basis_size(degree: int) -> int:
    return (degree + 1) ** 2


def eval_sh(degree: int, sh: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Evaluate SH coefficients along unit directions.

    Args:
        degree: SH degree in 0..3.
        sh: (..., (degree+1)^2, C) coefficients.
        dirs: (..., 3) unit directions.

    Returns:
        (..., C) values (no color offset applied).
    """
    if not 0 <= degree <= MAX_DEGREE:
        raise ValueError(f"sh degree must be in 0..{MAX_DEGREE}, got {degree}")
    sh = np.asarray(sh, dtype=np.float64)
    dirs = np.asarray(dirs, dtype=np.float64)
    result = C0 * sh[..., 0, :]
    if degree > 0:
        x = dirs[..., 0, None]
        y = dirs[..., 1, None]
        z = dirs[..., 2, None]
        result = result - C1 * y * sh[..., 1, :] + C1 * z * sh[..., 2, :] - C1 * x * sh[..., 3, :]
        if degree > 1:
            xx, yy, zz = x * x, y * y, z * z
            xy, yz, xz = x * y, y * z, x * z
            result = (
                result
                + C2[0] * xy * sh[..., 4, :]
                + C2[1] * yz * sh[..., 5, :]
                + C2[2] * (2.0 * zz - xx - yy) * sh[..., 6, :]
                + C2[3] * xz * sh[..., 7, :]
                + C2[4] * (xx - yy) * sh[..., 8, :]
            )
            if degree > 2:
                result = (
                    result
                    + C3[0] * y * (3 * xx - yy) * sh[..., 9, :]
                    + C3[1] * xy * z * sh[..., 10, :]
                    + C3[2] * y * (4 * zz - xx - yy) * sh[..., 11, :]
                    + C3[3] * z * (2 * zz - 3 * xx - 3 * yy) * sh[..., 12, :]
                    + C3[4] * x * (4 * zz - xx - yy) * sh[..., 13, :]
                    + C3[5] * z * (xx - yy) * sh[..., 14, :]
                    + C3[6] * x * (xx - 3 * yy) * sh[..., 15, :]
                )
    return result


def sh_to_color(degree: int, sh: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """View-dependent RGB: the SH evaluation clipped to [0, 1].

    Color is linear in the coefficients, so scaling them scales the
    (unclipped) rendered color by the same factor.
    """
    return np.clip(eval_sh(degree, sh, dirs), 0.0, 1.0)


def rgb_to_dc(rgb: np.ndarray) -> np.ndarray:
    """DC coefficient whose degree-0 evaluation reproduces the given RGB."""
    return np.asarray(rgb, dtype=np.float64) / C0
