"""Per-view visibility uncertainty from cross-view photo-consistency.

For a view i, every pixel is lifted to 3D through the cloud's rendered
depth and projected into the V nearest neighboring views. A neighbor's
vote is valid when the point lands in its frame and is not occluded
there (relative depth test against that neighbor's rendered depth). The
pixel's raw uncertainty is the population variance of the sampled
colors, averaged over RGB; pixels validated by fewer than 2 neighbors
get the sentinel maximum 1.0, as does any pixel the cloud does not
cover. The raw map is normalized by the standard deviation of all its
values and clamped to [0, 1].

Colors are sampled from the captured input images by default: the
measure is photo-consistency of the capture, not of the model. Sampling
the cloud's own re-renders instead is available behind a flag.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import GaussianCloud
from .errors import DimensionMismatch
from .geometry import CameraView
from .render import render, sample_bilinear
from .scene import SceneDataset

DEPTH_TOLERANCE = 0.05
SENTINEL = 1.0
COVERAGE_ALPHA = 1e-3
NORM_STD_FLOOR = 1e-8
MIN_VALID_VIEWS = 2


@dataclass
class AdjacencySpec:
    """How many neighboring views vote, selected by camera-center distance."""

    v_adjacent: int = 4

    def validate(self, n_views: int) -> None:
        if self.v_adjacent < 2:
            raise ValueError("need at least 2 adjacent views")
        if self.v_adjacent > n_views - 1:
            raise ValueError(
                f"v_adjacent={self.v_adjacent} but only {n_views - 1} "
                "other views exist"
            )


def select_adjacent_views(
    cameras: list[CameraView], index: int, v_adjacent: int
) -> list[int]:
    """Indices of the v_adjacent views nearest to view `index` by camera
    center, ties broken toward the lower index."""
    AdjacencySpec(v_adjacent).validate(len(cameras))
    center = cameras[index].center
    order = []
    for j, cam in enumerate(cameras):
        if j == index:
            continue
        order.append((float(np.linalg.norm(cam.center - center)), j))
    order.sort()
    return [j for _, j in order[:v_adjacent]]


def unproject(uv: np.ndarray, depth: np.ndarray, camera: CameraView) -> np.ndarray:
    """Lift pixels to world points: X = R^T (depth * K^-1 [u, v, 1] - t)."""
    uv = np.atleast_2d(np.asarray(uv, dtype=np.float64))
    depth = np.atleast_1d(np.asarray(depth, dtype=np.float64))
    if np.any(depth <= 0.0):
        raise ValueError("unproject requires positive depth")
    x = (uv[:, 0] - camera.cx) / camera.fx * depth
    y = (uv[:, 1] - camera.cy) / camera.fy * depth
    cam_pts = np.stack([x, y, depth], axis=1)
    return (cam_pts - camera.tvec) @ camera.R


def _consistency_votes(
    points: np.ndarray,
    neighbors: list[tuple[CameraView, np.ndarray, np.ndarray]],
    tau_d: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Raw color-variance scores for world points against neighbor views.

    Each neighbor is (camera, image, depth_map). Returns (scores, counts);
    scores carry the sentinel where counts < MIN_VALID_VIEWS.
    """
    n = points.shape[0]
    count = np.zeros(n, dtype=np.int64)
    s1 = np.zeros((n, 3))
    s2 = np.zeros((n, 3))
    for camera, image, depth_map in neighbors:
        uv, z = camera.project(points)
        in_frame = (
            (z > 0.0)
            & (uv[:, 0] >= -0.5) & (uv[:, 0] <= camera.width - 0.5)
            & (uv[:, 1] >= -0.5) & (uv[:, 1] <= camera.height - 0.5)
        )
        uv_safe = np.where(in_frame[:, None], uv, 0.0)
        seen_depth = sample_bilinear(depth_map, uv_safe)
        valid = in_frame & (np.abs(z - seen_depth) <= tau_d * np.abs(z))
        colors = sample_bilinear(image, uv_safe)
        count += valid
        s1 += np.where(valid[:, None], colors, 0.0)
        s2 += np.where(valid[:, None], colors**2, 0.0)

    scores = np.full(n, SENTINEL)
    enough = count >= MIN_VALID_VIEWS
    if np.any(enough):
        k = count[enough][:, None].astype(np.float64)
        mean = s1[enough] / k
        var = np.maximum(s2[enough] / k - mean**2, 0.0)
        scores[enough] = var.mean(axis=1)
    return scores, count


def point_uncertainty(
    point: np.ndarray,
    neighbors: list[tuple[CameraView, np.ndarray, np.ndarray]],
    tau_d: float = DEPTH_TOLERANCE,
) -> float:
    """Cross-view color variance of one world point (sentinel 1.0 when
    fewer than 2 neighbor views validate it)."""
    scores, _ = _consistency_votes(
        np.asarray(point, dtype=np.float64)[None], neighbors, tau_d
    )
    return float(scores[0])


def uncertainty_map(
    cloud: GaussianCloud,
    dataset: SceneDataset,
    view_index: int,
    spec: AdjacencySpec | None = None,
    tau_d: float = DEPTH_TOLERANCE,
    use_renders: bool = False,
) -> np.ndarray:
    """Normalized per-pixel visibility uncertainty for one view.

    Raw scores are divided by the standard deviation over the whole raw
    map and clamped to [0, 1]; a map with raw std below 1e-8 is all
    zeros (nothing stands out).
    """
    spec = spec or AdjacencySpec()
    views = dataset.views
    spec.validate(len(views))
    cam = views[view_index].camera

    own = render(cloud, cam)
    adjacent = select_adjacent_views(
        [v.camera for v in views], view_index, spec.v_adjacent
    )
    neighbors = []
    for j in adjacent:
        out_j = render(cloud, views[j].camera)
        image_j = out_j.color if use_renders else views[j].image.astype(np.float64)
        neighbors.append((views[j].camera, image_j, out_j.depth))

    h, w = cam.height, cam.width
    uu, vv = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    covered = (own.alpha >= COVERAGE_ALPHA) & (own.depth > 0.0)

    raw = np.full(h * w, SENTINEL)
    flat_cov = covered.ravel()
    if np.any(flat_cov):
        uv = np.stack([uu.ravel()[flat_cov], vv.ravel()[flat_cov]], axis=1)
        pts = unproject(uv, own.depth.ravel()[flat_cov], cam)
        raw[flat_cov], _ = _consistency_votes(pts, neighbors, tau_d)

    std = float(raw.std())
    if std < NORM_STD_FLOOR:
        return np.zeros((h, w))
    return np.clip(raw / std, 0.0, 1.0).reshape(h, w)


def fuse_mask(
    uncertainty: np.ndarray, mask: np.ndarray, theta: float
) -> np.ndarray:
    """Blend uncertainty into the masked-out regions:
    M' = U * (1 - M) + theta * M, clamped to [0, 1]."""
    uncertainty = np.asarray(uncertainty, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if uncertainty.shape != mask.shape:
        raise DimensionMismatch(
            f"uncertainty {uncertainty.shape} vs mask {mask.shape}"
        )
    if theta < 0.0:
        raise ValueError("theta must be >= 0")
    return np.clip(uncertainty * (1.0 - mask) + theta * mask, 0.0, 1.0)
