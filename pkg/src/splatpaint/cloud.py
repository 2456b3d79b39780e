"""Gaussian splat cloud: container, SfM initialization, and PLY persistence.

Storage conventions (all per splat):

    means       (N, 3) world positions
    log_scales  (N, 3) log of per-axis standard deviations
    quats       (N, 4) rotation quaternions (w, x, y, z), unit norm
    opacities   (N,)   pre-sigmoid logits
    sh          (N, K, 3) spherical-harmonics coefficients, K = (degree+1)^2

The PLY layout stores float64 properties x, y, z, scale_0..2, rot_0..3,
opacity, f_dc_0..2 and f_rest_* (channel-major), so save/load round-trips
are exact.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from . import sh as shlib
from .errors import CloudFormatError
from .geometry import normalize_quat

_OPACITY_INIT = 0.1
_SCALE_FLOOR = 1e-4


@dataclass
class GaussianCloud:
    means: np.ndarray
    log_scales: np.ndarray
    quats: np.ndarray
    opacities: np.ndarray
    sh: np.ndarray

    def __post_init__(self) -> None:
        n = self.means.shape[0]
        shapes = {
            "means": (self.means.shape, (n, 3)),
            "log_scales": (self.log_scales.shape, (n, 3)),
            "quats": (self.quats.shape, (n, 4)),
            "opacities": (self.opacities.shape, (n,)),
        }
        for field_name, (got, want) in shapes.items():
            if got != want:
                raise ValueError(f"{field_name}: expected {want}, got {got}")
        if self.sh.ndim != 3 or self.sh.shape[0] != n or self.sh.shape[2] != 3:
            raise ValueError(f"sh: expected (N, K, 3), got {self.sh.shape}")
        if self.sh.shape[1] not in (1, 4, 9, 16):
            raise ValueError(f"sh: {self.sh.shape[1]} coefficients is not a full degree")

    def __len__(self) -> int:
        return self.means.shape[0]

    @property
    def sh_degree(self) -> int:
        return int(np.sqrt(self.sh.shape[1])) - 1

    def astype(self, dtype) -> "GaussianCloud":
        return GaussianCloud(
            means=self.means.astype(dtype),
            log_scales=self.log_scales.astype(dtype),
            quats=self.quats.astype(dtype),
            opacities=self.opacities.astype(dtype),
            sh=self.sh.astype(dtype),
        )

    def copy(self) -> "GaussianCloud":
        return GaussianCloud(
            means=self.means.copy(),
            log_scales=self.log_scales.copy(),
            quats=self.quats.copy(),
            opacities=self.opacities.copy(),
            sh=self.sh.copy(),
        )

    def alphas(self) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.opacities))


def init_cloud(points: np.ndarray, colors: np.ndarray, sh_degree: int = 1) -> GaussianCloud:
    """Seed one isotropic splat per SfM point.

    Log-scales come from the mean distance to each point's 3 nearest
    neighbors (guarded below by a 1e-4 floor so coincident points stay
    finite); opacities start at logit(0.1); identity rotations; the DC SH
    coefficient reproduces the point color and higher bands start at zero.
    """
    points = np.asarray(points, dtype=np.float64)
    colors = np.asarray(colors, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3 or points.shape[0] == 0:
        raise ValueError(f"points: expected (P, 3) with P >= 1, got {points.shape}")
    if colors.shape != points.shape:
        raise ValueError(f"colors: expected {points.shape}, got {colors.shape}")
    n = points.shape[0]

    if n >= 4:
        tree = cKDTree(points)
        # query includes the point itself at distance 0; take columns 1..3
        dists, _ = tree.query(points, k=4)
        mean_dist = dists[:, 1:].mean(axis=1)
    elif n >= 2:
        tree = cKDTree(points)
        dists, _ = tree.query(points, k=n)
        mean_dist = dists[:, 1:].mean(axis=1)
    else:
        mean_dist = np.full(n, 0.1)
    mean_dist = np.maximum(mean_dist, _SCALE_FLOOR)

    log_scales = np.tile(np.log(mean_dist)[:, None], (1, 3))
    quats = np.zeros((n, 4))
    quats[:, 0] = 1.0
    opacities = np.full(n, np.log(_OPACITY_INIT / (1.0 - _OPACITY_INIT)))
    k = shlib.num_coeffs(sh_degree)
    sh = np.zeros((n, k, 3))
    sh[:, 0, :] = (np.clip(colors, 0.0, 1.0) - shlib.COLOR_OFFSET) / shlib.C0
    return GaussianCloud(points.copy(), log_scales, quats, opacities, sh)


# --- PLY persistence ------------------------------------------------------

def _ply_property_names(num_rest: int) -> list[str]:
    names = ["x", "y", "z",
             "scale_0", "scale_1", "scale_2",
             "rot_0", "rot_1", "rot_2", "rot_3",
             "opacity",
             "f_dc_0", "f_dc_1", "f_dc_2"]
    names += [f"f_rest_{i}" for i in range(num_rest)]
    return names


def save_cloud(path: Path | str, cloud: GaussianCloud) -> None:
    """Write the cloud as a binary little-endian PLY with float64 properties."""
    n = len(cloud)
    k = cloud.sh.shape[1]
    num_rest = 3 * (k - 1)
    names = _ply_property_names(num_rest)

    header = io.StringIO()
    header.write("ply\nformat binary_little_endian 1.0\n")
    header.write(f"element vertex {n}\n")
    for name in names:
        header.write(f"property double {name}\n")
    header.write("end_header\n")

    # f_rest is channel-major: all R rest coefficients, then G, then B
    rest = cloud.sh[:, 1:, :].transpose(0, 2, 1).reshape(n, num_rest)
    table = np.concatenate([
        cloud.means,
        cloud.log_scales,
        cloud.quats,
        cloud.opacities[:, None],
        cloud.sh[:, 0, :],
        rest,
    ], axis=1).astype("<f8")

    with open(path, "wb") as fh:
        fh.write(header.getvalue().encode("ascii"))
        fh.write(table.tobytes())


def load_cloud(path: Path | str) -> GaussianCloud:
    """Read a cloud written by save_cloud. Raises CloudFormatError on corrupt
    headers, format mismatches, or truncated payloads."""
    path = Path(path)
    blob = path.read_bytes()
    end = blob.find(b"end_header\n")
    if not blob.startswith(b"ply\n") or end < 0:
        raise CloudFormatError(f"{path.name}: not a PLY file (corrupt header)")
    header_lines = blob[:end].decode("ascii", errors="replace").splitlines()
    payload = blob[end + len(b"end_header\n"):]

    fmt = next((ln for ln in header_lines if ln.startswith("format ")), None)
    if fmt is None:
        raise CloudFormatError(f"{path.name}: missing format line")
    if fmt.split() != ["format", "binary_little_endian", "1.0"]:
        raise CloudFormatError(f"{path.name}: unsupported PLY format '{fmt}'")

    count = None
    props: list[tuple[str, str]] = []
    for ln in header_lines:
        parts = ln.split()
        if parts[:2] == ["element", "vertex"]:
            count = int(parts[2])
        elif parts and parts[0] == "property":
            if len(parts) != 3:
                raise CloudFormatError(f"{path.name}: malformed property line '{ln}'")
            props.append((parts[1], parts[2]))
    if count is None:
        raise CloudFormatError(f"{path.name}: missing vertex element")

    num_rest = sum(1 for _, name in props if name.startswith("f_rest_"))
    expected = _ply_property_names(num_rest)
    got_names = [name for _, name in props]
    if got_names != expected:
        raise CloudFormatError(f"{path.name}: unexpected property layout {got_names}")
    if any(typ != "double" for typ, _ in props):
        raise CloudFormatError(f"{path.name}: expected double-precision properties")
    if num_rest % 3 != 0:
        raise CloudFormatError(f"{path.name}: f_rest count {num_rest} not divisible by 3")
    k = num_rest // 3 + 1
    if k not in (1, 4, 9, 16):
        raise CloudFormatError(f"{path.name}: {k} SH coefficients is not a full degree")

    width = len(expected)
    need = count * width * 8
    if len(payload) < need:
        raise CloudFormatError(f"{path.name}: truncated payload ({len(payload)} < {need} bytes)")
    table = np.frombuffer(payload[:need], dtype="<f8").reshape(count, width).astype(np.float64)

    sh = np.zeros((count, k, 3))
    sh[:, 0, :] = table[:, 11:14]
    if k > 1:
        sh[:, 1:, :] = table[:, 14:].reshape(count, 3, k - 1).transpose(0, 2, 1)
    cloud = GaussianCloud(
        means=table[:, 0:3].copy(),
        log_scales=table[:, 3:6].copy(),
        quats=table[:, 6:10].copy(),
        opacities=table[:, 10].copy(),
        sh=sh,
    )
    if count and np.any(np.abs(np.linalg.norm(cloud.quats, axis=1) - 1.0) > 1e-6):
        cloud.quats = normalize_quat(cloud.quats)
    return cloud
