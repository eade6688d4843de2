"""Pinhole cameras, view-set JSON I/O and ray generation.

Convention is OpenCV/COLMAP style: camera looks down +z in its own frame,
x right, y down.  world_to_camera maps world points into that frame as
x_cam = R @ x_world + t.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ROTATION_TOL = 1e-4


@dataclass(frozen=True)
class CameraView:
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray  # (3, 3) world-to-camera rotation
    translation: np.ndarray  # (3,) world-to-camera translation

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64))
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        r = self.rotation
        if r.shape != (3, 3) or self.translation.shape != (3,):
            raise ValueError("rotation must be (3,3) and translation (3,)")
        if np.max(np.abs(r @ r.T - np.eye(3))) > ROTATION_TOL:
            raise ValueError("rotation is not orthonormal")
        if np.linalg.det(r) < 0:
            raise ValueError("rotation has negative determinant (reflection)")

    @property
    def camera_center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.rotation.T @ self.translation

    def world_to_camera_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m


@dataclass(frozen=True)
class ViewSet:
    views: tuple[CameraView, ...]

    def __post_init__(self):
        object.__setattr__(self, "views", tuple(self.views))
        if len(self.views) == 0:
            raise ValueError("a view set needs at least one view")
        w, h = self.views[0].width, self.views[0].height
        for i, v in enumerate(self.views):
            if v.width != w or v.height != h:
                raise ValueError(f"view {i} resolution {v.width}x{v.height} differs from {w}x{h}")

    def __len__(self) -> int:
        return len(self.views)

    def __iter__(self):
        return iter(self.views)

    def __getitem__(self, i: int) -> CameraView:
        return self.views[i]

    @property
    def width(self) -> int:
        return self.views[0].width

    @property
    def height(self) -> int:
        return self.views[0].height


def project_point(view: CameraView, x: np.ndarray):
    """(u, v, depth) of a world point in continuous pixel coordinates.

    Pixel i covers [i, i+1), so integer pixel centers land at i + 0.5.
    depth is camera-frame z; points with depth <= 0 are behind the camera.
    """
    x_cam = view.rotation @ np.asarray(x, dtype=np.float64) + view.translation
    z = x_cam[2]
    u = view.fx * x_cam[0] / z + view.cx
    v = view.fy * x_cam[1] / z + view.cy
    return u, v, z


def pixel_ray(view: CameraView, px) -> tuple[np.ndarray, np.ndarray]:
    """World-space ray through the center of pixel px = (col, row).

    Returns (origin, direction) with a unit direction; px may be fractional,
    the ray passes through (px + 0.5).
    """
    px = np.asarray(px, dtype=np.float64)
    if not (0 <= px[0] < view.width and 0 <= px[1] < view.height):
        raise ValueError(f"pixel {px.tolist()} outside {view.width}x{view.height} image")
    d_cam = np.array(
        [
            (px[0] + 0.5 - view.cx) / view.fx,
            (px[1] + 0.5 - view.cy) / view.fy,
            1.0,
        ]
    )
    d_world = view.rotation.T @ d_cam
    return view.camera_center, d_world / np.linalg.norm(d_world)


def look_at(position, target, width, height, fx, fy, *, up=(0.0, 0.0, 1.0)) -> CameraView:
    """Camera at `position` looking at `target`, principal point centered."""
    position = np.asarray(position, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    forward = target - position
    norm = np.linalg.norm(forward)
    if norm == 0:
        raise ValueError("camera position coincides with target")
    z_c = forward / norm
    y_tmp = -np.asarray(up, dtype=np.float64)
    y_c = y_tmp - (y_tmp @ z_c) * z_c
    y_norm = np.linalg.norm(y_c)
    if y_norm < 1e-9:
        raise ValueError("view direction parallel to up vector")
    y_c = y_c / y_norm
    x_c = np.cross(y_c, z_c)
    rot = np.stack([x_c, y_c, z_c], axis=0)  # world-to-camera
    return CameraView(
        width=width,
        height=height,
        fx=fx,
        fy=fy,
        cx=width / 2.0,
        cy=height / 2.0,
        rotation=rot,
        translation=-rot @ position,
    )


def orbit_views(
    center,
    radius: float,
    n: int,
    resolution: int,
    *,
    height: float = 0.0,
    fov_deg: float = 60.0,
) -> ViewSet:
    """n cameras evenly spaced on a horizontal circle, all looking at center.

    `height` lifts the circle above the target plane while still aiming at
    center, which tilts the cameras downward.
    """
    if n < 1:
        raise ValueError("need at least one view")
    if radius <= 0:
        raise ValueError("radius must be positive")
    center = np.asarray(center, dtype=np.float64)
    focal = resolution / (2.0 * np.tan(np.radians(fov_deg) / 2.0))
    views = []
    for i in range(n):
        az = 2.0 * np.pi * i / n
        pos = center + np.array([radius * np.cos(az), radius * np.sin(az), height])
        views.append(look_at(pos, center, resolution, resolution, focal, focal))
    return ViewSet(views)


def load_views(path) -> ViewSet:
    """Load a view set from the views.json schema.

    Schema: {"width": W, "height": H, "views": [{"fx", "fy", "cx", "cy",
    "world_to_camera": [16 floats, row-major]}]}.
    """
    try:
        spec = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON ({exc})") from exc
    for key in ("width", "height", "views"):
        if key not in spec:
            raise ValueError(f"{path}: missing key {key!r}")
    if not spec["views"]:
        raise ValueError(f"{path}: view list is empty")
    views = []
    for i, v in enumerate(spec["views"]):
        for key in ("fx", "fy", "cx", "cy", "world_to_camera"):
            if key not in v:
                raise ValueError(f"{path}: view {i} missing key {key!r}")
        m = np.asarray(v["world_to_camera"], dtype=np.float64)
        if m.shape != (16,):
            raise ValueError(f"{path}: view {i} world_to_camera must have 16 entries")
        m = m.reshape(4, 4)
        if np.max(np.abs(m[3] - np.array([0, 0, 0, 1.0]))) > 1e-9:
            raise ValueError(f"{path}: view {i} last matrix row must be [0,0,0,1]")
        try:
            views.append(
                CameraView(
                    width=int(spec["width"]),
                    height=int(spec["height"]),
                    fx=float(v["fx"]),
                    fy=float(v["fy"]),
                    cx=float(v["cx"]),
                    cy=float(v["cy"]),
                    rotation=m[:3, :3],
                    translation=m[:3, 3],
                )
            )
        except ValueError as exc:
            raise ValueError(f"{path}: view {i}: {exc}") from exc
    return ViewSet(views)


def save_views(views: ViewSet, path) -> None:
    payload = {
        "width": views.width,
        "height": views.height,
        "views": [
            {
                "fx": v.fx,
                "fy": v.fy,
                "cx": v.cx,
                "cy": v.cy,
                "world_to_camera": v.world_to_camera_matrix().reshape(-1).tolist(),
            }
            for v in views
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
