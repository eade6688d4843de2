"""Core data types for anisotropic Gaussian splat scenes.

Storage follows the de-facto 3DGS parameterization: log-scales, opacity
logits and unnormalized quaternions, with activations applied on access.
All math is done in float64; storage arrays are float32 to match the PLY
interchange format.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Condition-number guard for 3D covariance inversion.  cond(sigma) equals
# (s_max / s_min)^2, so a scale ratio of 1e6 is the same limit.
MAX_COVARIANCE_CONDITION = 1e12
MAX_SCALE_RATIO = 1e6


class DegeneratePrimitiveError(ValueError):
    """Raised when a primitive's covariance is too ill-conditioned to invert."""


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def inverse_sigmoid(y):
    y = np.asarray(y, dtype=np.float64)
    out = np.log(y) - np.log1p(-y)
    return out if out.ndim else float(out)


def normalize_quaternion(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm == 0):
        raise ValueError("zero quaternion cannot be normalized")
    return q / norm


def quaternion_to_rotation(q: np.ndarray) -> np.ndarray:
    """Rotation matrix for quaternion(s) in (w, x, y, z) order.

    Accepts a single (4,) quaternion or a batch (..., 4); quaternions are
    normalized first.  Returns (..., 3, 3).
    """
    q = normalize_quaternion(q)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    rot = np.empty(q.shape[:-1] + (3, 3), dtype=np.float64)
    rot[..., 0, 0] = 1 - 2 * (y * y + z * z)
    rot[..., 0, 1] = 2 * (x * y - w * z)
    rot[..., 0, 2] = 2 * (x * z + w * y)
    rot[..., 1, 0] = 2 * (x * y + w * z)
    rot[..., 1, 1] = 1 - 2 * (x * x + z * z)
    rot[..., 1, 2] = 2 * (y * z - w * x)
    rot[..., 2, 0] = 2 * (x * z - w * y)
    rot[..., 2, 1] = 2 * (y * z + w * x)
    rot[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return rot


def quaternion_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a*b in (w, x, y, z) order."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    w1, x1, y1, z1 = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    w2, x2, y2, z2 = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=-1,
    )


@dataclass(frozen=True)
class GaussianPrimitive:
    """One anisotropic Gaussian in storage parameterization.

    Attributes:
        position: (3,) world-space center.
        rotation: (4,) quaternion (w, x, y, z), unnormalized as stored.
        log_scale: (3,) log of the per-axis scale.
        opacity_logit: logit of the opacity.
        sh_coeffs: ((deg+1)^2, 3) spherical-harmonic color coefficients.
    """

    position: np.ndarray
    rotation: np.ndarray
    log_scale: np.ndarray
    opacity_logit: float
    sh_coeffs: np.ndarray

    @property
    def scale(self) -> np.ndarray:
        return np.exp(np.asarray(self.log_scale, dtype=np.float64))

    @property
    def opacity(self) -> float:
        return float(sigmoid(self.opacity_logit))

    @property
    def rotation_normalized(self) -> np.ndarray:
        return normalize_quaternion(self.rotation)


@dataclass
class SplatCloud:
    """Ordered collection of Gaussian primitives, stored column-wise.

    Attributes:
        positions: (K, 3) float32.
        rotations: (K, 4) float32 quaternions (w, x, y, z).
        log_scales: (K, 3) float32.
        opacity_logits: (K,) float32.
        sh_coeffs: (K, (deg+1)^2, 3) float32.
        sh_degree: SH degree shared by all primitives, 0..3.
    """

    positions: np.ndarray
    rotations: np.ndarray
    log_scales: np.ndarray
    opacity_logits: np.ndarray
    sh_coeffs: np.ndarray
    sh_degree: int = 0

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float32)
        self.rotations = np.ascontiguousarray(self.rotations, dtype=np.float32)
        self.log_scales = np.ascontiguousarray(self.log_scales, dtype=np.float32)
        self.opacity_logits = np.ascontiguousarray(self.opacity_logits, dtype=np.float32)
        self.sh_coeffs = np.ascontiguousarray(self.sh_coeffs, dtype=np.float32)
        k = len(self.positions)
        basis = (self.sh_degree + 1) ** 2
        if self.positions.shape != (k, 3):
            raise ValueError(f"positions must be (K, 3), got {self.positions.shape}")
        if self.rotations.shape != (k, 4):
            raise ValueError(f"rotations must be (K, 4), got {self.rotations.shape}")
        if self.log_scales.shape != (k, 3):
            raise ValueError(f"log_scales must be (K, 3), got {self.log_scales.shape}")
        if self.opacity_logits.shape != (k,):
            raise ValueError(f"opacity_logits must be (K,), got {self.opacity_logits.shape}")
        if self.sh_coeffs.shape != (k, basis, 3):
            raise ValueError(
                f"sh_coeffs must be (K, {basis}, 3) for sh_degree {self.sh_degree}, "
                f"got {self.sh_coeffs.shape}"
            )

    def __len__(self) -> int:
        return len(self.positions)

    def primitive(self, k: int) -> GaussianPrimitive:
        return GaussianPrimitive(
            position=self.positions[k].astype(np.float64),
            rotation=self.rotations[k].astype(np.float64),
            log_scale=self.log_scales[k].astype(np.float64),
            opacity_logit=float(self.opacity_logits[k]),
            sh_coeffs=self.sh_coeffs[k].astype(np.float64),
        )

    def take(self, indices) -> "SplatCloud":
        """Sub-cloud at the given indices, in the given order."""
        indices = np.asarray(indices)
        return SplatCloud(
            positions=self.positions[indices],
            rotations=self.rotations[indices],
            log_scales=self.log_scales[indices],
            opacity_logits=self.opacity_logits[indices],
            sh_coeffs=self.sh_coeffs[indices],
            sh_degree=self.sh_degree,
        )

    def copy(self) -> "SplatCloud":
        return SplatCloud(
            positions=self.positions.copy(),
            rotations=self.rotations.copy(),
            log_scales=self.log_scales.copy(),
            opacity_logits=self.opacity_logits.copy(),
            sh_coeffs=self.sh_coeffs.copy(),
            sh_degree=self.sh_degree,
        )

    # Activated views, float64.
    @property
    def scales(self) -> np.ndarray:
        return np.exp(self.log_scales.astype(np.float64))

    @property
    def opacities(self) -> np.ndarray:
        return sigmoid(self.opacity_logits.astype(np.float64))

    def rotation_matrices(self) -> np.ndarray:
        return quaternion_to_rotation(self.rotations.astype(np.float64))

    def covariances(self) -> np.ndarray:
        """(K, 3, 3) world-space covariances R S S^T R^T."""
        rot = self.rotation_matrices()
        m = rot * self.scales[:, None, :]
        return m @ np.swapaxes(m, 1, 2)

    def degenerate_mask(self) -> np.ndarray:
        """True where the activated scale ratio exceeds the inversion guard."""
        s = self.scales
        return s.max(axis=1) / s.min(axis=1) > MAX_SCALE_RATIO


def covariance(prim: GaussianPrimitive) -> np.ndarray:
    """World-space covariance R S S^T R^T of a single primitive.

    Returns a symmetric positive semi-definite (3, 3) float64 matrix.
    """
    rot = quaternion_to_rotation(prim.rotation)
    m = rot * prim.scale[None, :]
    return m @ m.T


def _inverse_covariance(prim: GaussianPrimitive) -> np.ndarray:
    s = prim.scale
    if (s.max() / s.min()) ** 2 > MAX_COVARIANCE_CONDITION:
        raise DegeneratePrimitiveError(
            f"covariance condition number {(s.max() / s.min()) ** 2:.3g} exceeds "
            f"{MAX_COVARIANCE_CONDITION:.0e}"
        )
    rot = quaternion_to_rotation(prim.rotation)
    # sigma^-1 = R S^-2 R^T
    return (rot / (s * s)[None, :]) @ rot.T


def evaluate_gaussian(prim: GaussianPrimitive, x: np.ndarray) -> float:
    """Unnormalized Gaussian density exp(-1/2 (x-mu)^T sigma^-1 (x-mu)).

    Equals 1 exactly at the primitive center; always in (0, 1].
    """
    inv = _inverse_covariance(prim)
    d = np.asarray(x, dtype=np.float64) - prim.position
    return float(np.exp(-0.5 * d @ inv @ d))
