"""Procedural ground-truth scenes for tests and benchmarks.

Each scene is an analytic raytrace of a textured ground plane, optional
shaded ellipsoids, and an optional decal that moves between views. The
generator therefore knows the exact clean appearance of every capture
and the exact per-view footprint of the decal, which is what the
accuracy benchmarks need: captures, clean references, and ground-truth
masks all come from the same closed-form scene.

Everything is driven by one seeded generator, so a (kind, seed) pair is
bit-reproducible, file for file.

Scene kinds:
  plane24    24 cameras on a ring, textured 2x2 m plane filling every frame
  ring34     34 cameras, plane plus two shaded ellipsoids
  distractor plane24 plus a dark decal pasted into views 8..15, drifting
             between frames; emits exact footprints and a jittered
             tracker-style variant of them
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .colmap import export_colmap
from .geometry import CameraView, look_at_camera
from .scene import SceneDataset, SceneView, save_cameras_json, save_image, save_mask

SCENE_KINDS = ("plane24", "ring34", "distractor")

PLANE_HALF = 1.0  # the plane spans [-1, 1]^2 metres at z = 0
RING_RADIUS = 3.0
RING_HEIGHT = 1.8
IMAGE_SIZE = 64
FOCAL = 320.0
SUPERSAMPLE = 3  # 3x3 rays per pixel, box-averaged

# Decal ("blob") parameters for the distractor scene. The per-view drift
# is deliberately a bit below the decal diameter: the nearest ring
# neighbors still overlap the current footprint while the next ones
# mostly do not, which is the regime a slowly moving object occupies in
# a real capture. The decal is nearly black and crosses a bright patch
# of the plane (see PlaneTexture.HIGHLIGHT_*), so cross-view color votes
# on its footprint disagree as strongly as the scene allows.
BLOB_VIEWS = tuple(range(8, 16))
BLOB_COLOR = np.array([0.04, 0.02, 0.03])
BLOB_RADIUS = 0.12
BLOB_START = np.array([-0.26, -0.14])
BLOB_DRIFT = np.array([0.075, 0.010])

LIGHT_DIR = np.array([0.35, -0.25, 0.88])
LIGHT_DIR = LIGHT_DIR / np.linalg.norm(LIGHT_DIR)
AMBIENT = 0.35

TRACK_FLIP_PROB = 0.10  # boundary-band corruption rate for tracker masks


@dataclass(frozen=True)
class Ellipsoid:
    center: np.ndarray
    radii: np.ndarray
    color: np.ndarray

    def shade(self, points: np.ndarray) -> np.ndarray:
        """View-independent Lambertian color at surface points."""
        n = (points - self.center) / self.radii ** 2
        n = n / np.linalg.norm(n, axis=-1, keepdims=True)
        lam = np.clip(n @ LIGHT_DIR, 0.0, None)
        return self.color * (AMBIENT + (1.0 - AMBIENT) * lam)[..., None]


ELLIPSOIDS = (
    Ellipsoid(
        center=np.array([0.45, -0.28, 0.20]),
        radii=np.array([0.30, 0.24, 0.20]),
        color=np.array([0.10, 0.55, 0.50]),
    ),
    Ellipsoid(
        center=np.array([-0.42, 0.30, 0.18]),
        radii=np.array([0.24, 0.30, 0.18]),
        color=np.array([0.75, 0.55, 0.15]),
    ),
)


class PlaneTexture:
    """Smooth multi-octave sinusoid texture with a few Gaussian blotches.

    Wavelengths sit well above the pixel footprint of the ring cameras,
    so captures stay bandlimited and cross-view bilinear lookups of the
    same surface point agree closely. Values stay inside [0.1, 0.9],
    except inside the optional highlight, which lifts them toward
    HIGHLIGHT_COLOR. The highlight is a fixed bright patch under the
    distractor decal's track; its parameters are constants, not random
    draws, so enabling it does not shift the generator stream.
    """

    WAVELENGTHS = (0.45, 0.31, 0.22)
    AMPLITUDES = (0.16, 0.12, 0.08)
    NUM_BUMPS = 6

    HIGHLIGHT_CENTER = (-0.02, -0.12)
    HIGHLIGHT_SEMI = (0.58, 0.30)
    HIGHLIGHT_COLOR = (0.97, 0.96, 0.94)
    HIGHLIGHT_GAIN = 0.97

    def __init__(self, rng: np.random.Generator, highlight: bool = False):
        waves = []
        for lam, amp in zip(self.WAVELENGTHS, self.AMPLITUDES):
            for channel in range(3):
                theta = rng.uniform(0.0, np.pi)
                phase = rng.uniform(0.0, 2.0 * np.pi)
                waves.append((channel, np.cos(theta), np.sin(theta), lam, phase, amp))
        self.waves = waves
        self.bump_centers = rng.uniform(-0.85, 0.85, size=(self.NUM_BUMPS, 2))
        self.bump_sigmas = rng.uniform(0.10, 0.22, size=self.NUM_BUMPS)
        self.bump_amps = rng.uniform(-0.12, 0.12, size=(self.NUM_BUMPS, 3))
        self.highlight = highlight

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        colors = np.full(x.shape + (3,), 0.5)
        for channel, dx, dy, lam, phase, amp in self.waves:
            colors[..., channel] += amp * np.sin(
                2.0 * np.pi * (dx * x + dy * y) / lam + phase
            )
        for center, sigma, amps in zip(
            self.bump_centers, self.bump_sigmas, self.bump_amps
        ):
            g = np.exp(
                -((x - center[0]) ** 2 + (y - center[1]) ** 2) / (2.0 * sigma ** 2)
            )
            colors += g[..., None] * amps
        colors = np.clip(colors, 0.1, 0.9)
        if self.highlight:
            hx, hy = self.HIGHLIGHT_CENTER
            sx, sy = self.HIGHLIGHT_SEMI
            q2 = ((x - hx) / sx) ** 2 + ((y - hy) / sy) ** 2
            g = self.HIGHLIGHT_GAIN * np.exp(-(q2 ** 4))
            colors += g[..., None] * (np.asarray(self.HIGHLIGHT_COLOR) - colors)
        return colors


def ring_cameras(
    count: int,
    size: int = IMAGE_SIZE,
    focal: float = FOCAL,
    radius: float = RING_RADIUS,
    height: float = RING_HEIGHT,
) -> list[CameraView]:
    """Evenly spaced cameras on a horizontal ring, all aimed at the origin."""
    cams = []
    for i in range(count):
        angle = 2.0 * np.pi * i / count
        position = np.array(
            [radius * np.cos(angle), radius * np.sin(angle), height]
        )
        cams.append(
            look_at_camera(i, position, np.zeros(3), focal, focal, size, size)
        )
    return cams


def _sample_grid(camera: CameraView, ss: int) -> tuple[np.ndarray, np.ndarray]:
    """World-space ray origin and directions for an ss x ss subpixel grid."""
    off = (np.arange(ss) + 0.5) / ss - 0.5
    u = (np.arange(camera.width)[:, None] + off).ravel()
    v = (np.arange(camera.height)[:, None] + off).ravel()
    vv, uu = np.meshgrid(v, u, indexing="ij")
    dirs_cam = np.stack(
        [
            (uu - camera.cx) / camera.fx,
            (vv - camera.cy) / camera.fy,
            np.ones_like(uu),
        ],
        axis=-1,
    )
    dirs_world = dirs_cam.reshape(-1, 3) @ camera.R  # R^T applied row-wise
    return camera.center, dirs_world


def _trace(
    camera: CameraView,
    texture: PlaneTexture,
    ellipsoids: tuple[Ellipsoid, ...] = (),
    blob_center: np.ndarray | None = None,
    ss: int = SUPERSAMPLE,
) -> tuple[np.ndarray, np.ndarray]:
    """Raytrace one view. Returns (image, blob_coverage), both box-filtered
    from the subpixel grid; blob_coverage is the per-pixel hit fraction."""
    origin, dirs = _sample_grid(camera, ss)
    n = dirs.shape[0]

    with np.errstate(divide="ignore"):
        t_plane = np.where(dirs[:, 2] < 0.0, -origin[2] / dirs[:, 2], np.inf)
    plane_xy = origin[None, :2] + t_plane[:, None] * dirs[:, :2]
    on_plane = np.all(np.abs(plane_xy) <= PLANE_HALF, axis=1)
    t_plane = np.where(on_plane, t_plane, np.inf)

    t_best = t_plane.copy()
    hit_obj = np.full(n, -1)  # -1 plane, >= 0 ellipsoid index
    for k, ell in enumerate(ellipsoids):
        o = (origin - ell.center) / ell.radii
        d = dirs / ell.radii
        a = np.einsum("ij,ij->i", d, d)
        b = d @ o
        disc = b ** 2 - a * (o @ o - 1.0)
        with np.errstate(invalid="ignore"):
            t_ell = (-b - np.sqrt(disc)) / a
        valid = (disc > 0.0) & (t_ell > 1e-6) & (t_ell < t_best)
        t_best = np.where(valid, t_ell, t_best)
        hit_obj = np.where(valid, k, hit_obj)

    if not np.all(np.isfinite(t_best)):
        raise RuntimeError(
            f"camera {camera.cam_id}: ray escaped the scene; "
            "the plane no longer fills the frame"
        )

    colors = np.empty((n, 3))
    plane_hit = hit_obj == -1
    colors[plane_hit] = texture(
        plane_xy[plane_hit, 0], plane_xy[plane_hit, 1]
    )
    blob_hit = np.zeros(n, dtype=bool)
    if blob_center is not None:
        dist2 = np.sum((plane_xy - blob_center) ** 2, axis=1)
        blob_hit = plane_hit & (dist2 <= BLOB_RADIUS ** 2)
        colors[blob_hit] = BLOB_COLOR
    for k, ell in enumerate(ellipsoids):
        sel = hit_obj == k
        if np.any(sel):
            points = origin + t_best[sel, None] * dirs[sel]
            colors[sel] = ell.shade(points)

    h, w = camera.height, camera.width
    image = colors.reshape(h, ss, w, ss, 3).mean(axis=(1, 3))
    coverage = blob_hit.reshape(h, ss, w, ss).mean(axis=(1, 3))
    return image, coverage


def _blob_center(view_index: int) -> np.ndarray | None:
    if view_index not in BLOB_VIEWS:
        return None
    return BLOB_START + BLOB_DRIFT * (view_index - BLOB_VIEWS[0])


def _sample_sfm(
    rng: np.random.Generator,
    texture: PlaneTexture,
    ellipsoids: tuple[Ellipsoid, ...],
    plane_points: int,
    surface_points: int,
) -> tuple[np.ndarray, np.ndarray]:
    """SfM-style point samples: plane coverage plus ellipsoid shells, with
    small positional and photometric noise so the init is realistic."""
    xy = rng.uniform(-0.92, 0.92, size=(plane_points, 2))
    pts = np.concatenate([xy, np.zeros((plane_points, 1))], axis=1)
    cols = texture(xy[:, 0], xy[:, 1])
    for ell in ellipsoids:
        u = rng.normal(size=(surface_points * 2, 3))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        p = ell.center + ell.radii * u
        p = p[p[:, 2] > 0.03][:surface_points]
        pts = np.concatenate([pts, p])
        cols = np.concatenate([cols, ell.shade(p)])
    pts = pts + rng.normal(scale=0.004, size=pts.shape)
    cols = np.clip(cols + rng.normal(scale=0.008, size=cols.shape), 0.0, 1.0)
    return pts, cols


def _jitter_mask(mask: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Flip pixels in a one-pixel band around the mask boundary, imitating
    the ragged edges of tracker output. An empty mask stays empty."""
    core = mask > 0.5
    band = ndimage.binary_dilation(core) & ~ndimage.binary_erosion(core)
    flips = band & (rng.random(mask.shape) < TRACK_FLIP_PROB)
    return (core ^ flips).astype(np.float32)


def _quantize(image: np.ndarray) -> np.ndarray:
    """Round to the 8-bit grid the PNG writer uses, so the in-memory view
    matches the bytes on disk exactly."""
    return (np.round(np.clip(image, 0.0, 1.0) * 255.0) / 255.0).astype(np.float32)


def generate_scene(kind: str, seed: int, out_dir: Path | str) -> dict:
    """Render a fixture scene to `out_dir` and return its manifest.

    Layout: images/, cameras.json, points3d.json, colmap/ (text model),
    gt_clean/ (decal-free references), and for `distractor` also
    gt_masks/ (exact decal footprints) and track_masks/ (jittered
    tracker-style copies). The manifest is also written as manifest.json.
    """
    if kind not in SCENE_KINDS:
        raise ValueError(f"unknown scene kind {kind!r}; expected {SCENE_KINDS}")
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    texture = PlaneTexture(rng, highlight=kind == "distractor")

    if kind == "ring34":
        n_views = 34
        ellipsoids = ELLIPSOIDS
        plane_points, surface_points = 1536, 256
    else:
        n_views = 24
        ellipsoids = ()
        plane_points, surface_points = 2048, 0
    cameras = ring_cameras(n_views)
    pts, cols = _sample_sfm(rng, texture, ellipsoids, plane_points, surface_points)
    mask_rng = np.random.default_rng(rng.integers(2 ** 63))

    for sub in ["images", "gt_clean"] + (
        ["gt_masks", "track_masks"] if kind == "distractor" else []
    ):
        (out_dir / sub).mkdir(parents=True, exist_ok=True)

    views = []
    blob_centers: dict[str, list[float]] = {}
    for i, cam in enumerate(cameras):
        name = f"view_{i:03d}"
        center = _blob_center(i) if kind == "distractor" else None
        clean, _ = _trace(cam, texture, ellipsoids)
        clean = _quantize(clean)
        if center is None:
            capture = clean
        else:
            capture, coverage = _trace(cam, texture, ellipsoids, center)
            capture = _quantize(capture)
            blob_centers[name] = [float(center[0]), float(center[1])]
        save_image(out_dir / "images" / f"{name}.png", capture)
        save_image(out_dir / "gt_clean" / f"{name}.png", clean)
        if kind == "distractor":
            gt_mask = (
                (coverage >= 0.5).astype(np.float32)
                if center is not None
                else np.zeros((cam.height, cam.width), dtype=np.float32)
            )
            save_mask(out_dir / "gt_masks" / f"{name}.png", gt_mask)
            save_mask(
                out_dir / "track_masks" / f"{name}.png",
                _jitter_mask(gt_mask, mask_rng),
            )
        views.append(SceneView(
            camera=cam, image=capture,
            mask=np.zeros((cam.height, cam.width), dtype=np.float32), name=name,
        ))

    save_cameras_json(out_dir / "cameras.json", cameras)
    rows = [
        [float(p[0]), float(p[1]), float(p[2]),
         float(c[0] * 255.0), float(c[1] * 255.0), float(c[2] * 255.0)]
        for p, c in zip(pts, cols)
    ]
    (out_dir / "points3d.json").write_text(json.dumps(rows))

    dataset = SceneDataset(
        views=views, sfm_points=pts, sfm_colors=cols, name=kind
    )
    export_colmap(dataset, out_dir / "colmap")

    manifest = {
        "kind": kind,
        "seed": seed,
        "views": n_views,
        "image_size": IMAGE_SIZE,
        "focal": FOCAL,
        "ring_radius": RING_RADIUS,
        "ring_height": RING_HEIGHT,
        "plane_half_extent": PLANE_HALF,
        "sfm_points": int(len(pts)),
        "ellipsoids": len(ellipsoids),
        "blob": (
            {
                "color": [float(c) for c in BLOB_COLOR],
                "radius": BLOB_RADIUS,
                "centers": blob_centers,
            }
            if kind == "distractor"
            else None
        ),
        "highlight": (
            {
                "center": list(PlaneTexture.HIGHLIGHT_CENTER),
                "semi_axes": list(PlaneTexture.HIGHLIGHT_SEMI),
                "color": list(PlaneTexture.HIGHLIGHT_COLOR),
                "gain": PlaneTexture.HIGHLIGHT_GAIN,
            }
            if kind == "distractor"
            else None
        ),
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=1, sort_keys=True)
    )
    return manifest
