"""Scene dataset loading, validation, and image/mask I/O.

A scene directory holds:

    images/            8-bit PNGs, one per camera, sorted name order pairs
                       with cameras sorted by id
    masks/             optional 8-bit single-channel PNGs mirroring images/
                       filenames; 255 = masked (remove/inpaint)
    cameras.json       array of {id, fx, fy, cx, cy, width, height,
                       qw, qx, qy, qz, tx, ty, tz}, world-to-camera pose
    points3d.json      optional array of [x, y, z, r, g, b] SfM seeds
                       (colors in 0..255)

Images are exchanged as (H, W, 3) float arrays in [0, 1]; masks as (H, W)
float arrays in [0, 1] where 1 means "masked out / to inpaint".
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DatasetError, DimensionMismatch
from .geometry import CameraView

log = logging.getLogger(__name__)

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")


def validate_image(arr: np.ndarray, name: str = "image") -> np.ndarray:
    arr = np.asarray(arr)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DimensionMismatch(f"{name}: expected (H, W, 3), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DatasetError(f"{name}: non-finite pixel values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise DatasetError(f"{name}: pixel values outside [0, 1]")
    return arr


def validate_mask(arr: np.ndarray, image_shape: tuple[int, int], name: str = "mask") -> np.ndarray:
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name}: expected (H, W), got {arr.shape}")
    if arr.shape != tuple(image_shape):
        raise DimensionMismatch(
            f"{name}: dimension-mismatch, mask {arr.shape} vs image {tuple(image_shape)}"
        )
    if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
        raise DatasetError(f"{name}: mask values must be finite and in [0, 1]")
    return arr


def load_image(path: Path | str) -> np.ndarray:
    """Load an 8-bit image file to a (H, W, 3) float32 array in [0, 1]."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    except Exception as exc:  # PIL raises a zoo of types for bad files
        raise DatasetError(f"unreadable-image: {path.name} ({exc})") from exc
    return arr


def save_image(path: Path | str, arr: np.ndarray) -> None:
    """Write a float image in [0, 1] as an 8-bit PNG (round-to-nearest)."""
    arr = np.clip(np.asarray(arr, dtype=np.float64), 0.0, 1.0)
    data = np.round(arr * 255.0).astype(np.uint8)
    Image.fromarray(data).save(Path(path))


def load_mask(path: Path | str) -> np.ndarray:
    """Load a single-channel mask PNG; 255 maps to 1.0 (masked)."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("L"), dtype=np.float32) / 255.0
    except Exception as exc:
        raise DatasetError(f"unreadable-image: {path.name} ({exc})") from exc
    return arr


def save_mask(path: Path | str, arr: np.ndarray) -> None:
    arr = np.clip(np.asarray(arr, dtype=np.float64), 0.0, 1.0)
    Image.fromarray(np.round(arr * 255.0).astype(np.uint8), mode="L").save(Path(path))


def save_depth_png(path: Path | str, depth: np.ndarray) -> None:
    """Write a depth map (meters) as a 16-bit PNG in millimeters."""
    mm = np.clip(np.asarray(depth, dtype=np.float64) * 1000.0, 0.0, 65535.0)
    Image.fromarray(np.round(mm).astype(np.uint16)).save(Path(path))


@dataclass
class SceneView:
    """One posed image with its (possibly all-zero) mask."""

    camera: CameraView
    image: np.ndarray  # (H, W, 3) float32 in [0, 1]
    mask: np.ndarray  # (H, W) float32 in [0, 1], 1 = masked
    name: str = ""


@dataclass
class SceneDataset:
    views: list[SceneView]
    sfm_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))  # (P, 3)
    sfm_colors: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))  # (P, 3) in [0, 1]
    name: str = "scene"

    def __post_init__(self) -> None:
        if len(self.views) < 2:
            raise DatasetError(f"{self.name}: a scene needs at least 2 views")
        ids = [v.camera.cam_id for v in self.views]
        if len(set(ids)) != len(ids):
            raise DatasetError(f"{self.name}: duplicate camera ids {sorted(ids)}")

    def __len__(self) -> int:
        return len(self.views)

    def camera_centers(self) -> np.ndarray:
        return np.stack([v.camera.center for v in self.views])

    def view_by_id(self, cam_id: int) -> SceneView:
        for v in self.views:
            if v.camera.cam_id == cam_id:
                return v
        raise KeyError(f"no view with camera id {cam_id}")


def _parse_camera_entry(entry: dict) -> CameraView:
    required = ("id", "fx", "fy", "cx", "cy", "width", "height",
                "qw", "qx", "qy", "qz", "tx", "ty", "tz")
    missing = [k for k in required if k not in entry]
    if missing:
        raise DatasetError(f"cameras.json entry missing fields {missing}")
    return CameraView(
        cam_id=int(entry["id"]),
        fx=float(entry["fx"]),
        fy=float(entry["fy"]),
        cx=float(entry["cx"]),
        cy=float(entry["cy"]),
        width=int(entry["width"]),
        height=int(entry["height"]),
        qvec=np.array([entry["qw"], entry["qx"], entry["qy"], entry["qz"]], dtype=np.float64),
        tvec=np.array([entry["tx"], entry["ty"], entry["tz"]], dtype=np.float64),
    )


def load_cameras_json(path: Path | str) -> list[CameraView]:
    path = Path(path)
    try:
        entries = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path.name}: invalid JSON ({exc})") from exc
    if not isinstance(entries, list):
        raise DatasetError(f"{path.name}: expected a JSON array of cameras")
    cams = [_parse_camera_entry(e) for e in entries]
    return sorted(cams, key=lambda c: c.cam_id)


def save_cameras_json(path: Path | str, cameras: list[CameraView]) -> None:
    entries = []
    for c in sorted(cameras, key=lambda c: c.cam_id):
        entries.append({
            "id": c.cam_id, "fx": c.fx, "fy": c.fy, "cx": c.cx, "cy": c.cy,
            "width": c.width, "height": c.height,
            "qw": c.qvec[0], "qx": c.qvec[1], "qy": c.qvec[2], "qz": c.qvec[3],
            "tx": c.tvec[0], "ty": c.tvec[1], "tz": c.tvec[2],
        })
    Path(path).write_text(json.dumps(entries, indent=1))


def load_dataset(scene_dir: Path | str, name: str | None = None) -> SceneDataset:
    """Load a scene directory into a SceneDataset.

    Missing masks default to all-zero. Raises DatasetError subclasses on a
    missing camera entry, an unreadable image, or any dimension mismatch.
    """
    scene_dir = Path(scene_dir)
    cam_path = scene_dir / "cameras.json"
    img_dir = scene_dir / "images"
    if not cam_path.exists():
        raise DatasetError(f"{scene_dir}: cameras.json not found")
    if not img_dir.is_dir():
        raise DatasetError(f"{scene_dir}: images/ not found")
    cameras = load_cameras_json(cam_path)

    image_files = sorted(
        p for p in img_dir.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS
    )
    if len(image_files) != len(cameras):
        raise DatasetError(
            f"missing-camera-entry: {len(image_files)} images vs "
            f"{len(cameras)} camera entries in {scene_dir}"
        )

    mask_dir = scene_dir / "masks"
    views = []
    for cam, img_path in zip(cameras, image_files):
        img = validate_image(load_image(img_path), img_path.name)
        if img.shape[:2] != (cam.height, cam.width):
            raise DimensionMismatch(
                f"{img_path.name}: dimension-mismatch, image {img.shape[:2]} vs "
                f"camera {cam.cam_id} ({cam.height}, {cam.width})"
            )
        mask_path = mask_dir / img_path.name
        if mask_dir.is_dir() and mask_path.exists():
            mask = validate_mask(load_mask(mask_path), img.shape[:2], mask_path.name)
        else:
            mask = np.zeros(img.shape[:2], dtype=np.float32)
        views.append(SceneView(camera=cam, image=img, mask=mask, name=img_path.stem))

    pts_path = scene_dir / "points3d.json"
    if pts_path.exists():
        raw = np.asarray(json.loads(pts_path.read_text()), dtype=np.float64)
        if raw.size and raw.shape[1] != 6:
            raise DatasetError("points3d.json: expected rows of [x, y, z, r, g, b]")
        pts = raw[:, :3] if raw.size else np.zeros((0, 3))
        cols = raw[:, 3:] / 255.0 if raw.size else np.zeros((0, 3))
    else:
        pts = np.zeros((0, 3))
        cols = np.zeros((0, 3))

    return SceneDataset(
        views=views, sfm_points=pts, sfm_colors=cols,
        name=name or scene_dir.name,
    )


def train_test_split(
    dataset: SceneDataset, ratio: float = 0.6
) -> tuple["SceneDataset", "SceneDataset"]:
    """Deterministic train/test view split, interleaved across the capture.

    Walks the views accumulating `ratio` per step; a view goes to the
    training side whenever the accumulator crosses 1. The default 0.6
    therefore repeats test, train, test, train, train every five views,
    spreading held-out cameras around the ring rather than bunching them.
    Both sides share the SfM points.
    """
    if not (0.0 < ratio < 1.0):
        raise ValueError(f"split ratio must be in (0, 1), got {ratio}")
    train_views, test_views = [], []
    acc = 0.0
    for view in dataset.views:
        acc += ratio
        if acc >= 1.0 - 1e-9:
            acc -= 1.0
            train_views.append(view)
        else:
            test_views.append(view)
    if len(train_views) < 2 or len(test_views) < 2:
        raise DatasetError(
            f"{dataset.name}: split {ratio} leaves a side with fewer than 2 views"
        )
    make = lambda views, tag: SceneDataset(
        views=views, sfm_points=dataset.sfm_points,
        sfm_colors=dataset.sfm_colors, name=f"{dataset.name}-{tag}",
    )
    return make(train_views, "train"), make(test_views, "test")
