"""CPU splat renderer with per-primitive contribution accounting.

Two compositing paths share one projection stage:

* a tiled fast path (16x16 tile binning, global per-view depth sort,
  per-pixel early termination), and
* a brute-force oracle that evaluates every projected splat at every pixel
  in global depth order, used as the correctness reference in tests.

A splat's footprint is truncated at its 3-sigma screen ellipse in both
paths, so tile binning never changes the result; early termination bounds
the fast path's deviation by the termination threshold.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cameras import CameraView, ViewSet
from .sh import sh_to_color
from .splats import GaussianPrimitive, SplatCloud, _inverse_covariance

TILE_SIZE = 16
ALPHA_CLAMP = 0.99
TERMINATION_THRESHOLD = 1e-4
NEAR_PLANE = 0.01
LOWPASS_PX2 = 0.3
CUTOFF_MAHALANOBIS_SQ = 9.0  # 3-sigma footprint
# The Jacobian is evaluated at a frustum-clamped point (|x/z| capped at
# 1.3 tan_fov), the reference rasterizer's guard: without it, primitives at
# grazing angles get unbounded first-order footprints that cover the frame.
FRUSTUM_CLAMP = 1.3


@dataclass(frozen=True)
class Splat2D:
    """One primitive projected into a view."""

    mean: np.ndarray  # (2,) continuous pixel coords
    cov: np.ndarray  # (2, 2) screen covariance, low-pass dilated
    depth: float  # camera-frame z
    color: np.ndarray  # (3,) RGB in [0, 1]
    opacity: float
    source: int  # primitive index in the cloud


@dataclass(frozen=True)
class RenderOutput:
    image: np.ndarray  # (H, W, 3) floats in [0, 1]
    transmittance: np.ndarray  # (H, W) residual transmittance in [0, 1]


@dataclass(frozen=True)
class ContributionReport:
    """View-accumulated rendering contributions.

    omega[k] is primitive k's compositing weight summed over pixels,
    normalized by pixel count, averaged over views (culled views count as
    zero).  per_view holds the per-view columns when retained.
    """

    omega: np.ndarray  # (K,)
    global_mean: float
    per_view: np.ndarray | None = None  # (K, N)

    def __post_init__(self):
        object.__setattr__(self, "omega", np.asarray(self.omega, dtype=np.float64))
        if self.per_view is not None:
            pv = np.asarray(self.per_view, dtype=np.float64)
            object.__setattr__(self, "per_view", pv)
            if pv.shape[0] != self.omega.shape[0]:
                raise ValueError("per_view row count must match omega length")
            if not np.allclose(pv.mean(axis=1), self.omega, rtol=0, atol=1e-12):
                raise ValueError("omega must be the row-mean of per_view")
        if abs(self.global_mean - float(self.omega.mean())) > 1e-12:
            raise ValueError("global_mean inconsistent with omega")

    def __len__(self) -> int:
        return len(self.omega)

    def to_dict(self) -> dict:
        return {"omega": self.omega.tolist(), "global_mean": self.global_mean}

    @classmethod
    def from_dict(cls, payload: dict) -> "ContributionReport":
        omega = np.asarray(payload["omega"], dtype=np.float64)
        return cls(omega=omega, global_mean=float(payload["global_mean"]))

    @classmethod
    def from_per_view(cls, per_view: np.ndarray) -> "ContributionReport":
        per_view = np.asarray(per_view, dtype=np.float64)
        omega = per_view.mean(axis=1)
        return cls(omega=omega, global_mean=float(omega.mean()), per_view=per_view)


class _ProjectedSplats:
    """Column-wise projected splats of one view, unordered."""

    __slots__ = ("means", "conics", "covs", "depths", "colors", "opacities", "sources", "half_extents")

    def __init__(self, means, conics, covs, depths, colors, opacities, sources, half_extents):
        self.means = means
        self.conics = conics  # (M, 3): inverse covariance entries (a, b, c)
        self.covs = covs
        self.depths = depths
        self.colors = colors
        self.opacities = opacities
        self.sources = sources
        self.half_extents = half_extents  # (M, 2): 3-sigma AABB half sizes

    def __len__(self) -> int:
        return len(self.depths)


def _project_cloud(cloud: SplatCloud, view: CameraView) -> _ProjectedSplats:
    """Project all primitives; drops the culled ones (behind the near plane
    or with the 3-sigma ellipse off-screen)."""
    positions = cloud.positions.astype(np.float64)
    rot = view.rotation
    cam = positions @ rot.T + view.translation
    z = cam[:, 2]
    in_front = z > NEAR_PLANE

    idx = np.flatnonzero(in_front)
    cam = cam[idx]
    z = z[idx]
    x, y = cam[:, 0], cam[:, 1]

    u = view.fx * x / z + view.cx
    v = view.fy * y / z + view.cy

    # EWA: sigma' = J W sigma W^T J^T with the perspective Jacobian at the
    # (frustum-clamped) camera-frame mean, then +0.3 px^2 on the diagonal.
    sigma = cloud.covariances()[idx]
    sigma_cam = np.einsum("ij,njk,lk->nil", rot, sigma, rot)
    inv_z = 1.0 / z
    lim_x = FRUSTUM_CLAMP * view.width / (2.0 * view.fx)
    lim_y = FRUSTUM_CLAMP * view.height / (2.0 * view.fy)
    x_j = np.clip(x * inv_z, -lim_x, lim_x) * z
    y_j = np.clip(y * inv_z, -lim_y, lim_y) * z
    j = np.zeros((len(idx), 2, 3))
    j[:, 0, 0] = view.fx * inv_z
    j[:, 0, 2] = -view.fx * x_j * inv_z * inv_z
    j[:, 1, 1] = view.fy * inv_z
    j[:, 1, 2] = -view.fy * y_j * inv_z * inv_z
    cov2d = j @ sigma_cam @ np.swapaxes(j, 1, 2)
    cov2d[:, 0, 0] += LOWPASS_PX2
    cov2d[:, 1, 1] += LOWPASS_PX2

    hx = 3.0 * np.sqrt(cov2d[:, 0, 0])
    hy = 3.0 * np.sqrt(cov2d[:, 1, 1])
    on_screen = (u + hx >= 0) & (u - hx <= view.width) & (v + hy >= 0) & (v - hy <= view.height)

    idx = idx[on_screen]
    u, v, z = u[on_screen], v[on_screen], z[on_screen]
    cov2d = cov2d[on_screen]
    hx, hy = hx[on_screen], hy[on_screen]

    det = cov2d[:, 0, 0] * cov2d[:, 1, 1] - cov2d[:, 0, 1] ** 2
    conics = np.stack(
        [cov2d[:, 1, 1] / det, -cov2d[:, 0, 1] / det, cov2d[:, 0, 0] / det], axis=1
    )

    dirs = positions[idx] - view.camera_center
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    colors = sh_to_color(cloud.sh_degree, cloud.sh_coeffs[idx].astype(np.float64), dirs)
    opacities = cloud.opacities[idx]

    return _ProjectedSplats(
        means=np.stack([u, v], axis=1),
        conics=conics,
        covs=cov2d,
        depths=z,
        colors=colors,
        opacities=opacities,
        sources=idx,
        half_extents=np.stack([hx, hy], axis=1),
    )


def project(prim: GaussianPrimitive, view: CameraView) -> Splat2D | None:
    """Project a single primitive; None when culled."""
    basis = prim.sh_coeffs.shape[0]
    degree = int(round(np.sqrt(basis))) - 1
    cloud = SplatCloud(
        positions=prim.position[None, :],
        rotations=prim.rotation[None, :],
        log_scales=prim.log_scale[None, :],
        opacity_logits=np.array([prim.opacity_logit]),
        sh_coeffs=prim.sh_coeffs[None, :, :],
        sh_degree=degree,
    )
    sp = _project_cloud(cloud, view)
    if len(sp) == 0:
        return None
    return Splat2D(
        mean=sp.means[0],
        cov=sp.covs[0],
        depth=float(sp.depths[0]),
        color=sp.colors[0],
        opacity=float(sp.opacities[0]),
        source=0,
    )


def _alpha_grid(sp: _ProjectedSplats, s: int, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Truncated splat alpha on the pixel-center grid ys x xs.

    Shared by the tiled and oracle paths so their per-pixel arithmetic is
    identical; only binning, ordering and termination differ between them.
    """
    dx = xs - sp.means[s, 0]
    dy = ys - sp.means[s, 1]
    a, b, c = sp.conics[s]
    maha = a * dx[None, :] ** 2 + 2.0 * b * dy[:, None] * dx[None, :] + c * dy[:, None] ** 2
    alpha = np.zeros_like(maha)
    inside = maha <= CUTOFF_MAHALANOBIS_SQ
    alpha[inside] = np.minimum(sp.opacities[s] * np.exp(-0.5 * maha[inside]), ALPHA_CLAMP)
    return alpha


def _tile_bins(sp: _ProjectedSplats, order: np.ndarray, width: int, height: int):
    """Assign depth-ordered splats to the 16x16 tiles their 3-sigma AABB
    touches.  Returns (n_tiles_x, n_tiles_y, tile_lists) where each tile
    list keeps ascending depth order."""
    ntx = (width + TILE_SIZE - 1) // TILE_SIZE
    nty = (height + TILE_SIZE - 1) // TILE_SIZE
    means = sp.means[order]
    half = sp.half_extents[order]
    # Pixel center ix + 0.5 must satisfy |ix + 0.5 - u| <= hx, so the
    # touched pixel columns span [u - hx - 0.5, u + hx - 0.5]; one extra
    # pixel of margin keeps the bound conservative.
    x0 = np.clip(np.floor((means[:, 0] - half[:, 0] - 1.0) / TILE_SIZE).astype(int), 0, ntx - 1)
    x1 = np.clip(np.floor((means[:, 0] + half[:, 0] + 1.0) / TILE_SIZE).astype(int), 0, ntx - 1)
    y0 = np.clip(np.floor((means[:, 1] - half[:, 1] - 1.0) / TILE_SIZE).astype(int), 0, nty - 1)
    y1 = np.clip(np.floor((means[:, 1] + half[:, 1] + 1.0) / TILE_SIZE).astype(int), 0, nty - 1)

    tile_ids = []
    splat_rows = []
    for i in range(len(means)):
        tx = np.arange(x0[i], x1[i] + 1)
        ty = np.arange(y0[i], y1[i] + 1)
        ids = (ty[:, None] * ntx + tx[None, :]).ravel()
        tile_ids.append(ids)
        splat_rows.append(np.full(ids.shape, i))
    if tile_ids:
        tile_ids = np.concatenate(tile_ids)
        splat_rows = np.concatenate(splat_rows)
    else:
        tile_ids = np.empty(0, dtype=int)
        splat_rows = np.empty(0, dtype=int)
    by_tile = np.argsort(tile_ids, kind="stable")  # stable keeps depth order per tile
    tile_ids = tile_ids[by_tile]
    splat_rows = splat_rows[by_tile]
    bounds = np.searchsorted(tile_ids, np.arange(ntx * nty + 1))
    return ntx, nty, tile_ids, splat_rows, bounds


def _render_tiled(
    cloud: SplatCloud,
    view: CameraView,
    *,
    term_threshold: float = TERMINATION_THRESHOLD,
    collect_weights: bool = False,
):
    """Tiled fast path.  Returns (image, transmittance, weight_sums)."""
    height, width = view.height, view.width
    image = np.zeros((height, width, 3))
    transmittance = np.ones((height, width))
    weights = np.zeros(len(cloud)) if collect_weights else None

    sp = _project_cloud(cloud, view)
    if len(sp) == 0:
        return image, transmittance, weights
    order = np.argsort(sp.depths, kind="stable")

    ntx, nty, _, splat_rows, bounds = _tile_bins(sp, order, width, height)
    for tile in range(ntx * nty):
        rows = splat_rows[bounds[tile] : bounds[tile + 1]]
        if rows.size == 0:
            continue
        px0 = (tile % ntx) * TILE_SIZE
        py0 = (tile // ntx) * TILE_SIZE
        px1 = min(px0 + TILE_SIZE, width)
        py1 = min(py0 + TILE_SIZE, height)
        xs = np.arange(px0, px1) + 0.5
        ys = np.arange(py0, py1) + 0.5

        t = transmittance[py0:py1, px0:px1]
        rgb = image[py0:py1, px0:px1]
        active = t >= term_threshold
        for row in rows:
            s = order[row]
            alpha = _alpha_grid(sp, s, xs, ys)
            contrib = alpha * t * active
            rgb += contrib[:, :, None] * sp.colors[s]
            if collect_weights:
                weights[sp.sources[s]] += contrib.sum()
            t -= contrib
            active = t >= term_threshold
            if not active.any():
                break
    return image, transmittance, weights


def render(
    cloud: SplatCloud,
    view: CameraView,
    *,
    term_threshold: float = TERMINATION_THRESHOLD,
) -> RenderOutput:
    """Render one view front-to-back over a black background."""
    if len(cloud) == 0:
        raise ValueError("cannot render an empty cloud")
    image, transmittance, _ = _render_tiled(cloud, view, term_threshold=term_threshold)
    return RenderOutput(image=image, transmittance=transmittance)


def render_oracle(cloud: SplatCloud, view: CameraView):
    """Brute-force reference: every splat at every pixel, global depth
    order, no tiling, no early termination.

    Returns (RenderOutput, per-primitive weight sums normalized by pixel
    count).  Intended for small clouds (a few thousand primitives).
    """
    if len(cloud) == 0:
        raise ValueError("cannot render an empty cloud")
    height, width = view.height, view.width
    image = np.zeros((height, width, 3))
    transmittance = np.ones((height, width))
    weights = np.zeros(len(cloud))

    sp = _project_cloud(cloud, view)
    xs = np.arange(width) + 0.5
    ys = np.arange(height) + 0.5
    for s in np.argsort(sp.depths, kind="stable"):
        alpha = _alpha_grid(sp, s, xs, ys)
        contrib = alpha * transmittance
        image += contrib[:, :, None] * sp.colors[s]
        weights[sp.sources[s]] += contrib.sum()
        transmittance -= contrib
    return RenderOutput(image=image, transmittance=transmittance), weights / (height * width)


def accumulate_weights(
    cloud: SplatCloud,
    views: ViewSet,
    *,
    term_threshold: float = TERMINATION_THRESHOLD,
    keep_per_view: bool = True,
    max_workers: int = 0,
) -> ContributionReport:
    """Per-primitive compositing weights averaged over all views.

    omega[k] = mean over views of (sum over pixels of alpha_hat * T) /
    pixel_count.  Views where a primitive is culled contribute zero.
    Views render in parallel worker threads; the per-view columns are
    assembled in view order, so the result is independent of worker count.
    """
    if len(cloud) == 0:
        raise ValueError("cannot analyze an empty cloud")
    pixel_count = views.width * views.height

    def one_view(view: CameraView) -> np.ndarray:
        _, _, w = _render_tiled(cloud, view, term_threshold=term_threshold, collect_weights=True)
        return w / pixel_count

    workers = max_workers if max_workers > 0 else min(len(views), os.cpu_count() or 1)
    if workers <= 1:
        columns = [one_view(v) for v in views]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            columns = list(pool.map(one_view, views))
    per_view = np.stack(columns, axis=1)
    report = ContributionReport.from_per_view(per_view)
    if not keep_per_view:
        report = ContributionReport(omega=report.omega, global_mean=report.global_mean)
    return report


def intersection_energy(
    prim: GaussianPrimitive, origin: np.ndarray, direction: np.ndarray
) -> tuple[float, float]:
    """Peak value of the Gaussian along a ray and where it occurs.

    With o' = origin - center, the quadratic (o' + t d)^T sigma^-1 (o' + t d)
    is minimized at t* = -(d^T sigma^-1 o') / (d^T sigma^-1 d); the energy is
    the Gaussian evaluated there, in (0, 1].
    """
    inv = _inverse_covariance(prim)
    o = np.asarray(origin, dtype=np.float64) - prim.position
    d = np.asarray(direction, dtype=np.float64)
    dd = d @ inv @ d
    t_star = -(d @ inv @ o) / dd
    closest = o + t_star * d
    energy = float(np.exp(-0.5 * closest @ inv @ closest))
    return energy, float(t_star)
