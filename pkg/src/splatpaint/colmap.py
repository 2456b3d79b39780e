"""COLMAP text-model import.

Reads the cameras.txt / images.txt / points3D.txt trio and converts to
the native dataset schema. Only a converter: cameras.json stays the
canonical pose format. PINHOLE and SIMPLE_PINHOLE models are supported.

COLMAP places the center of the top-left pixel at (0.5, 0.5) while here
pixel centers sit on integer coordinates, so principal points shift by
-0.5 on import (and +0.5 on export).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import DatasetError
from .geometry import CameraView
from .scene import (
    SceneDataset,
    SceneView,
    load_image,
    load_mask,
    validate_image,
    validate_mask,
)

PIXEL_CENTER_SHIFT = 0.5


def _data_lines(path: Path):
    """Yield (line_number, stripped_line) skipping comments and blanks."""
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield lineno, line


def _parse_error(path: Path, lineno: int, detail: str) -> DatasetError:
    return DatasetError(f"parse-error: {path.name}:{lineno}: {detail}")


def _parse_cameras(path: Path) -> dict[int, tuple[float, float, float, float, int, int]]:
    """CAMERA_ID -> (fx, fy, cx, cy, width, height), principal point shifted."""
    cameras = {}
    for lineno, line in _data_lines(path):
        parts = line.split()
        if len(parts) < 4:
            raise _parse_error(path, lineno, "too few fields")
        try:
            cam_id = int(parts[0])
            width = int(parts[2])
            height = int(parts[3])
            params = [float(p) for p in parts[4:]]
        except ValueError as exc:
            raise _parse_error(path, lineno, str(exc)) from exc
        model = parts[1]
        if model == "PINHOLE":
            if len(params) != 4:
                raise _parse_error(path, lineno, "PINHOLE needs 4 params")
            fx, fy, cx, cy = params
        elif model == "SIMPLE_PINHOLE":
            if len(params) != 3:
                raise _parse_error(path, lineno, "SIMPLE_PINHOLE needs 3 params")
            f, cx, cy = params
            fx = fy = f
        else:
            raise DatasetError(
                f"unsupported-camera-model: {model} (camera {cam_id})"
            )
        cameras[cam_id] = (
            fx, fy,
            cx - PIXEL_CENTER_SHIFT, cy - PIXEL_CENTER_SHIFT,
            width, height,
        )
    return cameras


def _parse_images(path: Path) -> list[tuple[int, np.ndarray, np.ndarray, int, str]]:
    """Rows of (image_id, qvec, tvec, camera_id, name).

    images.txt alternates a pose line with a 2D-observations line; the
    observations are not needed here and are skipped.
    """
    entries = []
    expect_pose = True
    # observation lines may be completely empty (zero 2D points), so the
    # pose/observation alternation must see blank lines too; only comment
    # lines are transparent
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if line.startswith("#"):
            continue
        if not expect_pose:
            expect_pose = True  # observation line (possibly empty), ignore
            continue
        if not line:
            continue  # stray blank between records
        parts = line.split()
        if len(parts) < 10:
            raise _parse_error(path, lineno, "pose line needs 10 fields")
        try:
            image_id = int(parts[0])
            qvec = np.array([float(p) for p in parts[1:5]])
            tvec = np.array([float(p) for p in parts[5:8]])
            camera_id = int(parts[8])
        except ValueError as exc:
            raise _parse_error(path, lineno, str(exc)) from exc
        entries.append((image_id, qvec, tvec, camera_id, parts[9]))
        expect_pose = False
    return entries


def _parse_points3d(path: Path) -> tuple[np.ndarray, np.ndarray]:
    pts = []
    cols = []
    for lineno, line in _data_lines(path):
        parts = line.split()
        if len(parts) < 7:
            raise _parse_error(path, lineno, "point line needs 7+ fields")
        try:
            pts.append([float(p) for p in parts[1:4]])
            cols.append([int(p) for p in parts[4:7]])
        except ValueError as exc:
            raise _parse_error(path, lineno, str(exc)) from exc
    if not pts:
        return np.zeros((0, 3)), np.zeros((0, 3))
    return np.asarray(pts, dtype=np.float64), np.asarray(cols, dtype=np.float64) / 255.0


def import_colmap(path: Path | str, name: str | None = None) -> SceneDataset:
    """Build a SceneDataset from a COLMAP text model directory.

    Images are looked up by their images.txt names under `path`/images,
    falling back to the parent directory's images/ (the usual layout with
    the model in a colmap/ subdirectory). Masks pair by filename from the
    sibling masks/ directory when present.
    """
    path = Path(path)
    for fname in ("cameras.txt", "images.txt", "points3D.txt"):
        if not (path / fname).exists():
            raise DatasetError(f"missing COLMAP file: {path / fname}")

    intrinsics = _parse_cameras(path / "cameras.txt")
    entries = _parse_images(path / "images.txt")
    pts, cols = _parse_points3d(path / "points3D.txt")

    image_root = None
    for candidate in (path / "images", path.parent / "images"):
        if candidate.is_dir():
            image_root = candidate
            break
    if image_root is None:
        raise DatasetError(f"no images/ directory beside {path}")
    mask_root = image_root.parent / "masks"

    views = []
    for image_id, qvec, tvec, camera_id, img_name in sorted(
        entries, key=lambda e: e[0]
    ):
        if camera_id not in intrinsics:
            raise DatasetError(
                f"missing-camera-entry: image '{img_name}' references "
                f"camera {camera_id}"
            )
        fx, fy, cx, cy, width, height = intrinsics[camera_id]
        norm = np.linalg.norm(qvec)
        if norm == 0.0:
            raise DatasetError(f"parse-error: zero quaternion for '{img_name}'")
        camera = CameraView(
            cam_id=image_id, fx=fx, fy=fy, cx=cx, cy=cy,
            width=width, height=height, qvec=qvec / norm, tvec=tvec,
        )
        img_path = image_root / img_name
        image = validate_image(load_image(img_path), img_name)
        if image.shape[:2] != (height, width):
            raise DatasetError(
                f"dimension-mismatch: image '{img_name}' is "
                f"{image.shape[:2]}, camera says ({height}, {width})"
            )
        mask_path = mask_root / img_name
        if mask_path.exists():
            mask = validate_mask(load_mask(mask_path), image.shape[:2], img_name)
        else:
            mask = np.zeros(image.shape[:2], dtype=np.float32)
        views.append(
            SceneView(camera=camera, image=image, mask=mask,
                      name=Path(img_name).stem)
        )

    return SceneDataset(
        views=views, sfm_points=pts, sfm_colors=cols,
        name=name or image_root.parent.name,
    )


def export_colmap(dataset: SceneDataset, out_dir: Path | str) -> None:
    """Write the dataset's poses and points as a COLMAP text model."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    with open(out_dir / "cameras.txt", "w") as fh:
        fh.write("# Camera list: CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n")
        for view in dataset.views:
            c = view.camera
            fh.write(
                f"{c.cam_id} PINHOLE {c.width} {c.height} "
                f"{c.fx:.12g} {c.fy:.12g} "
                f"{c.cx + PIXEL_CENTER_SHIFT:.12g} "
                f"{c.cy + PIXEL_CENTER_SHIFT:.12g}\n"
            )

    with open(out_dir / "images.txt", "w") as fh:
        fh.write(
            "# Image list: IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, "
            "CAMERA_ID, NAME\n"
        )
        for view in dataset.views:
            c = view.camera
            q = " ".join(f"{v:.17g}" for v in c.qvec)
            t = " ".join(f"{v:.17g}" for v in c.tvec)
            fh.write(f"{c.cam_id} {q} {t} {c.cam_id} {view.name}.png\n")
            fh.write("\n")  # no 2D observations

    with open(out_dir / "points3D.txt", "w") as fh:
        fh.write("# 3D point list: POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[]\n")
        rgb = np.clip(np.round(dataset.sfm_colors * 255.0), 0, 255).astype(int)
        for i, (p, c) in enumerate(zip(dataset.sfm_points, rgb)):
            fh.write(
                f"{i} {p[0]:.17g} {p[1]:.17g} {p[2]:.17g} "
                f"{c[0]} {c[1]} {c[2]} 0\n"
            )
