import numpy as np

from splatpurify.cameras import CameraView
from splatpurify.sh import rgb_to_dc
from splatpurify.splats import SplatCloud


def random_cloud(
    rng: np.random.Generator,
    k: int,
    *,
    sh_degree: int = 0,
    center=(0.0, 0.0, 4.0),
    spread: float = 1.2,
    scale_range=(0.02, 0.08),
    opacity_range=(0.05, 0.7),
) -> SplatCloud:
    """Random cloud in front of an identity camera; all storage values are
    float32-representable by construction."""
    basis = (sh_degree + 1) ** 2
    q = rng.normal(size=(k, 4))
    sh = np.zeros((k, basis, 3))
    sh[:, 0, :] = rgb_to_dc(rng.uniform(0.1, 0.9, (k, 3)))
    if basis > 1:
        sh[:, 1:, :] = rng.normal(0.0, 0.05, (k, basis - 1, 3))
    return SplatCloud(
        positions=np.asarray(center) + rng.uniform(-spread, spread, (k, 3)),
        rotations=q / np.linalg.norm(q, axis=1, keepdims=True),
        log_scales=np.log(rng.uniform(*scale_range, (k, 3))),
        opacity_logits=-np.log(1.0 / rng.uniform(*opacity_range, k) - 1.0),
        sh_coeffs=sh,
        sh_degree=sh_degree,
    )


def identity_view(resolution: int = 64, focal: float = 60.0) -> CameraView:
    return CameraView(
        width=resolution,
        height=resolution,
        fx=focal,
        fy=focal,
        cx=resolution / 2.0,
        cy=resolution / 2.0,
        rotation=np.eye(3),
        translation=np.zeros(3),
    )
