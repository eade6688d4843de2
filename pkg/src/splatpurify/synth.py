"""Synthetic scenes with planted, ground-truth-labeled watermark blobs.

The scene is the interior of a textured box observed from orbit rings
inside it.  Watermark primitives form a few compact blobs that are either
parked outside the box (occluded from every training view) or nearly
transparent; dedicated hidden views stare at each blob from close range.
Construction is rejected and resampled until the blobs are provably dim
from the training views and bright from the hidden ones.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cameras import ViewSet, look_at, orbit_views
from .metrics import psnr
from .purify import PurificationReport
from .renderer import ContributionReport, accumulate_weights, render
from .sh import rgb_to_dc
from .splats import SplatCloud, inverse_sigmoid

BOX_HALF = 3.0
SH_DEGREE = 1
TRAIN_FRACTION_MAX = 0.01
HIDDEN_FRACTION_MIN = 0.1

_FACE_TINTS = np.array(
    [
        [1.00, 0.92, 0.86],
        [0.86, 0.95, 1.00],
        [0.92, 1.00, 0.88],
        [1.00, 0.88, 0.92],
        [0.90, 0.90, 1.00],
        [1.00, 1.00, 0.88],
    ]
)
_CHECKER_A = np.array([0.85, 0.78, 0.62])
_CHECKER_B = np.array([0.22, 0.32, 0.48])
_BLOB_COLORS = np.array(
    [
        [0.95, 0.15, 0.85],
        [0.10, 0.90, 0.90],
        [0.95, 0.60, 0.10],
        [0.55, 0.95, 0.15],
    ]
)


@dataclass(frozen=True)
class SyntheticScene:
    """A labeled test scene: cloud = scene primitives then watermark
    primitives; the index sets partition [0, K)."""

    cloud: SplatCloud
    scene_indices: np.ndarray
    watermark_indices: np.ndarray
    train_views: ViewSet
    hidden_views: ViewSet
    seed: int


def _empty_arrays(n: int) -> dict:
    basis = (SH_DEGREE + 1) ** 2
    return {
        "positions": np.zeros((n, 3)),
        "rotations": np.zeros((n, 4)),
        "log_scales": np.zeros((n, 3)),
        "opacity_logits": np.zeros(n),
        "sh_coeffs": np.zeros((n, basis, 3)),
    }


def _box_walls(rng: np.random.Generator, n_scene: int) -> dict:
    """Single-layer opaque Gaussian tiling of all six interior faces, plus
    jittered fillers so the count is exactly n_scene."""
    g = max(4, int(np.sqrt(n_scene / 6)))
    half = BOX_HALF
    spacing = 2 * half / g
    arrays = _empty_arrays(n_scene)
    faces = [(axis, sign) for axis in range(3) for sign in (-1.0, 1.0)]

    n_grid = 6 * g * g
    cursor = 0
    for face_id, (axis, sign) in enumerate(faces):
        b_axis, c_axis = [a for a in range(3) if a != axis]
        ii, jj = np.meshgrid(np.arange(g), np.arange(g), indexing="ij")
        ii, jj = ii.ravel(), jj.ravel()
        n_face = len(ii)
        pos = np.zeros((n_face, 3))
        pos[:, axis] = sign * half
        pos[:, b_axis] = -half + (ii + 0.5) * spacing
        pos[:, c_axis] = -half + (jj + 0.5) * spacing
        pos[:, [b_axis, c_axis]] += rng.uniform(-0.08, 0.08, (n_face, 2)) * spacing

        log_scale = np.zeros((n_face, 3))
        log_scale[:, axis] = np.log(0.02 * spacing)
        log_scale[:, b_axis] = np.log(0.5 * spacing * rng.uniform(0.9, 1.1, n_face))
        log_scale[:, c_axis] = np.log(0.5 * spacing * rng.uniform(0.9, 1.1, n_face))

        checker = (ii + jj) % 2
        base = np.where(checker[:, None] == 0, _CHECKER_A, _CHECKER_B)
        color = np.clip(base * _FACE_TINTS[face_id], 0.0, 1.0)

        sl = slice(cursor, cursor + n_face)
        arrays["positions"][sl] = pos
        arrays["rotations"][sl] = [1.0, 0.0, 0.0, 0.0]
        arrays["log_scales"][sl] = log_scale
        arrays["opacity_logits"][sl] = inverse_sigmoid(rng.uniform(0.93, 0.985, n_face))
        arrays["sh_coeffs"][sl, 0, :] = rgb_to_dc(color)
        cursor += n_face

    # jittered fillers make up the remainder; they float just inside the
    # wall plane so the grid tiles behind them never occlude them fully
    for i in range(cursor, n_scene):
        axis, sign = faces[int(rng.integers(0, 6))]
        b_axis, c_axis = [a for a in range(3) if a != axis]
        pos = np.zeros(3)
        pos[axis] = sign * (half - rng.uniform(0.15, 0.4) * spacing)
        pos[b_axis], pos[c_axis] = rng.uniform(-0.9 * half, 0.9 * half, 2)
        arrays["positions"][i] = pos
        arrays["rotations"][i] = [1.0, 0.0, 0.0, 0.0]
        arrays["log_scales"][i, axis] = np.log(0.02 * spacing)
        arrays["log_scales"][i, b_axis] = np.log(0.5 * spacing)
        arrays["log_scales"][i, c_axis] = np.log(0.5 * spacing)
        arrays["opacity_logits"][i] = inverse_sigmoid(rng.uniform(0.93, 0.985))
        tone = _CHECKER_A if rng.uniform() < 0.5 else _CHECKER_B
        arrays["sh_coeffs"][i, 0, :] = rgb_to_dc(np.clip(tone, 0, 1))

    # degree-1 gradient texture over the whole box
    grad = 0.08 * arrays["positions"] / half
    arrays["sh_coeffs"][:, 1, :] = grad[:, [0]]
    arrays["sh_coeffs"][:, 2, :] = grad[:, [1]]
    arrays["sh_coeffs"][:, 3, :] = grad[:, [2]]
    return arrays


def _random_quaternions(rng: np.random.Generator, n: int) -> np.ndarray:
    q = rng.normal(size=(n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def _watermark_blobs(rng: np.random.Generator, n_wm: int, resolution: int):
    """2-4 compact blobs (occluded or faint) plus close-range hidden views."""
    half = BOX_HALF
    n_blobs = int(rng.integers(2, 5))
    counts = np.full(n_blobs, n_wm // n_blobs)
    counts[: n_wm % n_blobs] += 1
    arrays = _empty_arrays(n_wm)
    hidden = []
    focal = resolution / (2.0 * np.tan(np.radians(30.0)))

    cursor = 0
    for blob_id, count in enumerate(counts):
        mode = "occluded" if rng.uniform() < 0.5 else "faint"
        if mode == "occluded":
            # well clear of the wall plane, so the blob cannot chain into
            # the scene cluster through low-weight wall stragglers
            radius = 0.05 * half
            axis = int(rng.integers(0, 3))
            sign = 1.0 if rng.uniform() < 0.5 else -1.0
            normal = np.zeros(3)
            normal[axis] = sign
            center = rng.uniform(-0.5 * half, 0.5 * half, 3)
            center[axis] = sign * (half + 1.5 * half)
            opacities = rng.uniform(0.6, 0.9, count)
            scale = 0.5 * radius
        else:
            # interior but outside the camera rings and off the view axes
            radius = 0.05 * half
            azimuth = rng.uniform(0, 2 * np.pi)
            radial = rng.uniform(0.55, 0.75) * half
            center = np.array(
                [
                    radial * np.cos(azimuth),
                    radial * np.sin(azimuth),
                    rng.uniform(-0.4, 0.4) * half,
                ]
            )
            normal = np.array([np.cos(azimuth), np.sin(azimuth), 0.0])
            opacities = rng.uniform(0.01, 0.05, count)
            scale = 0.7 * radius  # heavier overlap so the faint stack adds up

        sl = slice(cursor, cursor + count)
        arrays["positions"][sl] = center + rng.normal(0.0, radius, (count, 3))
        arrays["rotations"][sl] = _random_quaternions(rng, count)
        arrays["log_scales"][sl] = np.log(scale * rng.uniform(0.8, 1.2, (count, 3)))
        arrays["opacity_logits"][sl] = inverse_sigmoid(opacities)
        arrays["sh_coeffs"][sl, 0, :] = rgb_to_dc(_BLOB_COLORS[blob_id % len(_BLOB_COLORS)])
        cursor += count

        tangent = np.zeros(3)
        tangent[(int(np.argmax(np.abs(normal))) + 1) % 3] = 1.0
        distance = 1.8 * radius if mode == "faint" else 3.0 * radius
        for tilt in (-0.25, 0.25):
            eye = center + distance * (normal + tilt * tangent) / np.linalg.norm(
                normal + tilt * tangent
            )
            hidden.append(look_at(eye, center, resolution, resolution, focal, focal))
    return arrays, ViewSet(hidden)


def _train_rings(resolution: int, n_views: int) -> ViewSet:
    """Two orbit rings near the box center, looking through it so every
    wall is covered from the opposite side.  Keeping the cameras away from
    the walls keeps per-primitive contributions evenly spread instead of a
    few close-up tiles hogging the compositing mass."""
    per_ring = max(1, n_views // 2)
    radius = 0.40 * BOX_HALF
    height = 0.35 * BOX_HALF
    # 70 degree FOV: narrower frustums leave wall corners outside every
    # view, which manufactures zero-contribution scene primitives
    lo = orbit_views((0, 0, 0), radius, per_ring, resolution, height=-height, fov_deg=70.0)
    hi = orbit_views((0, 0, 0), radius, n_views - per_ring, resolution, height=height, fov_deg=70.0)
    return ViewSet(tuple(lo) + tuple(hi))


def _watermark_fractions(
    cloud: SplatCloud, views: ViewSet, wm_indices: np.ndarray
) -> np.ndarray:
    """Per view: the watermark population's share of composited weight,
    normalized by pixel count."""
    report = accumulate_weights(cloud, views, keep_per_view=True)
    return report.per_view[wm_indices].sum(axis=0)


def make_scene(
    seed: int,
    n_scene: int = 2000,
    n_wm: int = 240,
    *,
    resolution: int = 96,
    n_train_views: int = 16,
    max_attempts: int = 100,
) -> SyntheticScene:
    """Deterministic labeled scene for a given seed.

    Watermark blobs must stay below a 1% weight share from every-view
    average on the training ring and above 10% on their hidden views;
    otherwise the construction is resampled.
    """
    if n_scene < 500:
        raise ValueError("n_scene must be >= 500")
    if n_wm != 0 and n_wm < 50:
        raise ValueError("n_wm must be 0 or >= 50")

    train_views = _train_rings(resolution, n_train_views)
    for attempt in range(max_attempts):
        rng = np.random.default_rng([seed, attempt])
        scene_arrays = _box_walls(rng, n_scene)

        if n_wm == 0:
            cloud = SplatCloud(**scene_arrays, sh_degree=SH_DEGREE)
            hidden = ViewSet(
                [
                    look_at(
                        (0.3 * BOX_HALF, 0, 0),
                        (BOX_HALF, 0, 0),
                        resolution,
                        resolution,
                        resolution,
                        resolution,
                    )
                ]
            )
            return SyntheticScene(
                cloud=cloud,
                scene_indices=np.arange(n_scene),
                watermark_indices=np.empty(0, dtype=np.int64),
                train_views=train_views,
                hidden_views=hidden,
                seed=seed,
            )

        wm_arrays, hidden_views = _watermark_blobs(rng, n_wm, resolution)
        cloud = SplatCloud(
            **{key: np.concatenate([scene_arrays[key], wm_arrays[key]]) for key in scene_arrays},
            sh_degree=SH_DEGREE,
        )
        wm_indices = np.arange(n_scene, n_scene + n_wm)
        train_frac = _watermark_fractions(cloud, train_views, wm_indices)
        hidden_frac = _watermark_fractions(cloud, hidden_views, wm_indices)
        if train_frac.mean() < TRAIN_FRACTION_MAX and hidden_frac.mean() > HIDDEN_FRACTION_MIN:
            return SyntheticScene(
                cloud=cloud,
                scene_indices=np.arange(n_scene),
                watermark_indices=wm_indices,
                train_views=train_views,
                hidden_views=hidden_views,
                seed=seed,
            )
    raise RuntimeError(
        f"no valid watermark placement after {max_attempts} attempts (seed {seed})"
    )


@dataclass(frozen=True)
class PurificationSummary:
    """Harness metrics for one purification run.

    scene_psnr / watermark_psnr compare the purified render against the
    original render.  scene_psnr_drop is the paper-style fidelity loss: it
    measures both clouds against the watermark-free scene render (the
    ground truth only the harness has) and takes the difference, so exact
    watermark removal yields a negative drop.  watermark_psnr_drop is
    relative to the 100 dB self-comparison cap.
    """

    watermark_recall: float
    scene_retention: float
    scene_psnr: float
    watermark_psnr: float
    scene_psnr_baseline_vs_clean: float
    scene_psnr_purified_vs_clean: float

    @property
    def scene_psnr_drop(self) -> float:
        return self.scene_psnr_baseline_vs_clean - self.scene_psnr_purified_vs_clean

    @property
    def watermark_psnr_drop(self) -> float:
        return 100.0 - self.watermark_psnr

    def to_dict(self) -> dict:
        return {
            "watermark_recall": self.watermark_recall,
            "scene_retention": self.scene_retention,
            "scene_psnr": self.scene_psnr,
            "watermark_psnr": self.watermark_psnr,
            "scene_psnr_baseline_vs_clean": self.scene_psnr_baseline_vs_clean,
            "scene_psnr_purified_vs_clean": self.scene_psnr_purified_vs_clean,
            "scene_psnr_drop": self.scene_psnr_drop,
            "watermark_psnr_drop": self.watermark_psnr_drop,
        }


def _mean_psnr(reference: SplatCloud, candidate: SplatCloud, views: ViewSet) -> float:
    values = [psnr(render(reference, v).image, render(candidate, v).image) for v in views]
    return float(np.mean(values))


def evaluate_purification(
    scene: SyntheticScene,
    purified: SplatCloud,
    report: PurificationReport,
) -> PurificationSummary:
    """Recall/retention against the ground-truth index sets plus render
    fidelity on both view sets."""
    pruned = set(report.pruned_indices.tolist())
    n_wm = len(scene.watermark_indices)
    recall = (
        sum(1 for i in scene.watermark_indices if int(i) in pruned) / n_wm if n_wm else 1.0
    )
    retention = (
        sum(1 for i in scene.scene_indices if int(i) not in pruned)
        / len(scene.scene_indices)
    )

    clean = scene.cloud.take(scene.scene_indices)
    return PurificationSummary(
        watermark_recall=recall,
        scene_retention=retention,
        scene_psnr=_mean_psnr(scene.cloud, purified, scene.train_views),
        watermark_psnr=_mean_psnr(scene.cloud, purified, scene.hidden_views),
        scene_psnr_baseline_vs_clean=_mean_psnr(clean, scene.cloud, scene.train_views),
        scene_psnr_purified_vs_clean=_mean_psnr(clean, purified, scene.train_views),
    )
