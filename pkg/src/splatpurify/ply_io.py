"""Binary little-endian PLY I/O in the standard 3DGS vertex layout.

Property order on write: x y z nx ny nz f_dc_{0..2} f_rest_* opacity
scale_{0..2} rot_{0..3}, all float32.  Normals are written as zeros and
ignored on read.  f_rest is channel-major: all of channel 0's higher-order
coefficients, then channel 1's, then channel 2's.
"""
from __future__ import annotations

import warnings
from pathlib import Path

import numpy as np

from .splats import MAX_SCALE_RATIO, SplatCloud

_MAGIC = b"ply"
_FORMAT = "binary_little_endian 1.0"


class PlyFormatError(ValueError):
    """Malformed header, missing property, or truncated payload."""


def _base_properties() -> list[str]:
    return ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]


def _tail_properties() -> list[str]:
    return ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]


def _property_names(sh_degree: int) -> list[str]:
    n_rest = 3 * ((sh_degree + 1) ** 2 - 1)
    return _base_properties() + [f"f_rest_{i}" for i in range(n_rest)] + _tail_properties()


def save_ply(cloud: SplatCloud, path) -> None:
    """Write the cloud; the file reloads to an identical cloud bit-exactly."""
    if len(cloud) == 0:
        raise ValueError("empty cloud")
    k = len(cloud)
    basis = (cloud.sh_degree + 1) ** 2
    names = _property_names(cloud.sh_degree)

    data = np.empty((k, len(names)), dtype="<f4")
    data[:, 0:3] = cloud.positions
    data[:, 3:6] = 0.0  # normals, unused
    data[:, 6:9] = cloud.sh_coeffs[:, 0, :]
    n_rest = 3 * (basis - 1)
    if n_rest:
        data[:, 9 : 9 + n_rest] = cloud.sh_coeffs[:, 1:, :].transpose(0, 2, 1).reshape(k, n_rest)
    tail = 9 + n_rest
    data[:, tail] = cloud.opacity_logits
    data[:, tail + 1 : tail + 4] = cloud.log_scales
    data[:, tail + 4 : tail + 8] = cloud.rotations

    header_lines = [
        "ply",
        f"format {_FORMAT}",
        f"element vertex {k}",
        *[f"property float {name}" for name in names],
        "end_header",
    ]
    header = ("\n".join(header_lines) + "\n").encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())


def _parse_header(raw: bytes, path) -> tuple[int, list[str], int]:
    """Returns (vertex_count, property_names, payload_offset)."""
    end_marker = b"end_header\n"
    end = raw.find(end_marker)
    if end < 0:
        raise PlyFormatError(f"{path}: no end_header found")
    payload_offset = end + len(end_marker)
    lines = raw[:end].decode("ascii", errors="replace").splitlines()
    if not lines or lines[0].strip() != "ply":
        raise PlyFormatError(f"{path}: missing 'ply' magic")

    fmt = None
    count = None
    names: list[str] = []
    in_vertex = False
    for line in lines[1:]:
        parts = line.split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            fmt = " ".join(parts[1:])
        elif parts[0] == "element":
            if len(parts) != 3:
                raise PlyFormatError(f"{path}: malformed element line {line!r}")
            in_vertex = parts[1] == "vertex"
            if in_vertex:
                count = int(parts[2])
        elif parts[0] == "property":
            if not in_vertex:
                continue
            if len(parts) != 3 or parts[1] not in ("float", "float32"):
                raise PlyFormatError(
                    f"{path}: unsupported property {line!r} (only float32 vertex properties)"
                )
            names.append(parts[2])
        else:
            raise PlyFormatError(f"{path}: unexpected header line {line!r}")
    if fmt != _FORMAT:
        raise PlyFormatError(f"{path}: format must be {_FORMAT!r}, got {fmt!r}")
    if count is None:
        raise PlyFormatError(f"{path}: no vertex element")
    return count, names, payload_offset


def _infer_sh_degree(n_rest: int, path) -> int:
    if n_rest % 3 != 0:
        raise PlyFormatError(f"{path}: f_rest count {n_rest} not divisible by 3")
    basis = n_rest // 3 + 1
    degree = int(round(np.sqrt(basis))) - 1
    if (degree + 1) ** 2 != basis or not 0 <= degree <= 3:
        raise PlyFormatError(f"{path}: f_rest count {n_rest} matches no sh degree in 0..3")
    return degree


def load_ply(path, *, warn_degenerate: bool = True) -> SplatCloud:
    """Load a 3DGS-layout PLY into a SplatCloud, storage values untouched.

    Near-flat primitives (activated scale ratio above the inversion guard)
    are kept but reported through a single warning listing their indices.
    """
    raw = Path(path).read_bytes()
    count, names, payload_offset = _parse_header(raw, path)

    columns = {name: i for i, name in enumerate(names)}
    n_rest = sum(1 for name in names if name.startswith("f_rest_"))
    degree = _infer_sh_degree(n_rest, path)
    required = [n for n in _property_names(degree) if n not in ("nx", "ny", "nz")]
    for name in required:
        if name not in columns:
            raise PlyFormatError(f"{path}: missing vertex property {name!r}")

    n_props = len(names)
    expected = count * n_props * 4
    payload = raw[payload_offset:]
    if len(payload) < expected:
        raise PlyFormatError(
            f"{path}: truncated payload, expected {expected} bytes at offset "
            f"{payload_offset}, found {len(payload)}"
        )
    data = np.frombuffer(payload[:expected], dtype="<f4").reshape(count, n_props)

    def col(name: str) -> np.ndarray:
        return data[:, columns[name]]

    basis = (degree + 1) ** 2
    sh = np.empty((count, basis, 3), dtype=np.float32)
    for c in range(3):
        sh[:, 0, c] = col(f"f_dc_{c}")
    if basis > 1:
        rest = np.stack([col(f"f_rest_{i}") for i in range(n_rest)], axis=1)
        sh[:, 1:, :] = rest.reshape(count, 3, basis - 1).transpose(0, 2, 1)

    cloud = SplatCloud(
        positions=np.stack([col("x"), col("y"), col("z")], axis=1),
        rotations=np.stack([col(f"rot_{i}") for i in range(4)], axis=1),
        log_scales=np.stack([col(f"scale_{i}") for i in range(3)], axis=1),
        opacity_logits=col("opacity").copy(),
        sh_coeffs=sh,
        sh_degree=degree,
    )
    if warn_degenerate:
        bad = np.flatnonzero(cloud.degenerate_mask())
        if bad.size:
            warnings.warn(
                f"{path}: {bad.size} primitive(s) with activated scale ratio > "
                f"{MAX_SCALE_RATIO:.0e} (indices {bad[:16].tolist()}"
                f"{'...' if bad.size > 16 else ''}); 3D density queries on them "
                "will fail",
                RuntimeWarning,
                stacklevel=2,
            )
    return cloud
