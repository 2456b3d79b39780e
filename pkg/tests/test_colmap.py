"""COLMAP text-model import and export."""

import numpy as np
import pytest

from splatpaint.colmap import export_colmap, import_colmap
from splatpaint.errors import DatasetError
from splatpaint.scene import SceneDataset, SceneView, save_image, save_mask
from tests.conftest import ring_camera

CAMERAS_HEADER = "# Camera list: CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n"
IMAGES_HEADER = "# Image list\n"
POINTS_HEADER = "# 3D point list\n"


def write_model(tmp_path, cameras_txt, images_txt, points_txt="",
                image_arrays=None, mask_arrays=None):
    """Lay out a model directory with a sibling images/ tree."""
    model = tmp_path / "colmap"
    model.mkdir()
    (model / "cameras.txt").write_text(CAMERAS_HEADER + cameras_txt)
    (model / "images.txt").write_text(IMAGES_HEADER + images_txt)
    (model / "points3D.txt").write_text(POINTS_HEADER + points_txt)
    img_dir = tmp_path / "images"
    img_dir.mkdir()
    for name, arr in (image_arrays or {}).items():
        save_image(img_dir / name, arr)
    if mask_arrays:
        mask_dir = tmp_path / "masks"
        mask_dir.mkdir()
        for name, arr in mask_arrays.items():
            save_mask(mask_dir / name, arr)
    return model


def two_view_model(tmp_path, cameras_txt=None, rng=None):
    """Minimal valid model: one SIMPLE_PINHOLE camera shared by 2 views."""
    gen = rng or np.random.default_rng(0)
    imgs = {f"view_{i:03d}.png": gen.uniform(size=(8, 8, 3)) for i in range(2)}
    cameras = cameras_txt or "1 SIMPLE_PINHOLE 8 8 500 4.0 4.0\n"
    images = (
        "10 1 0 0 0 0 0 0 1 view_000.png\n"
        "1.5 2.5 7\n"
        "11 0.7071067811865476 0.7071067811865476 0 0 0.1 -0.2 2.0 1 view_001.png\n"
        "\n"
    )
    points = "0 0.5 -0.5 1.0 255 128 0 0.1\n1 0 0 2 0 0 255 0.2 4 1 7 2\n"
    return write_model(tmp_path, cameras, images, points, imgs)


class TestImportColmap:
    def test_simple_pinhole_shares_focal(self, tmp_path):
        ds = import_colmap(two_view_model(tmp_path))
        cam = ds.views[0].camera
        assert cam.fx == 500.0 and cam.fy == 500.0
        # COLMAP's (0.5, 0.5) top-left pixel center maps to integer centers
        assert cam.cx == 3.5 and cam.cy == 3.5

    def test_pinhole_params(self, tmp_path):
        model = two_view_model(
            tmp_path, cameras_txt="1 PINHOLE 8 8 400 410 4.25 3.75\n")
        ds = import_colmap(model)
        cam = ds.views[0].camera
        assert cam.fx == 400.0 and cam.fy == 410.0
        assert cam.cx == 3.75 and cam.cy == 3.25

    def test_identity_pose(self, tmp_path):
        ds = import_colmap(two_view_model(tmp_path))
        cam = ds.views[0].camera
        np.testing.assert_array_equal(cam.qvec, [1.0, 0.0, 0.0, 0.0])
        np.testing.assert_array_equal(cam.tvec, [0.0, 0.0, 0.0])
        np.testing.assert_allclose(cam.R, np.eye(3), atol=1e-15)

    def test_views_sorted_by_image_id_and_named_by_stem(self, tmp_path):
        ds = import_colmap(two_view_model(tmp_path))
        assert [v.camera.cam_id for v in ds.views] == [10, 11]
        assert [v.name for v in ds.views] == ["view_000", "view_001"]

    def test_points_scaled_to_unit_colors(self, tmp_path):
        ds = import_colmap(two_view_model(tmp_path))
        assert ds.sfm_points.shape == (2, 3)
        np.testing.assert_allclose(ds.sfm_colors[0], [1.0, 128 / 255.0, 0.0])

    def test_nonblank_observation_lines_are_skipped(self, tmp_path):
        # view_000's observation line carries actual 2D points
        ds = import_colmap(two_view_model(tmp_path))
        assert len(ds.views) == 2

    def test_masks_pair_by_filename(self, tmp_path, rng):
        model = tmp_path / "colmap"
        imgs = {f"view_{i:03d}.png": rng.uniform(size=(8, 8, 3))
                for i in range(2)}
        mask = np.zeros((8, 8))
        mask[:4] = 1.0
        write_model(
            tmp_path,
            "1 SIMPLE_PINHOLE 8 8 500 4.0 4.0\n",
            "1 1 0 0 0 0 0 0 1 view_000.png\n\n"
            "2 1 0 0 0 0 0 0 1 view_001.png\n\n",
            image_arrays=imgs,
            mask_arrays={"view_000.png": mask},
        )
        ds = import_colmap(model)
        np.testing.assert_array_equal(ds.views[0].mask, mask)
        np.testing.assert_array_equal(ds.views[1].mask, np.zeros((8, 8)))

    def test_unsupported_model(self, tmp_path):
        model = two_view_model(
            tmp_path, cameras_txt="1 RADIAL 8 8 500 4 4 0.1 0.01\n")
        with pytest.raises(DatasetError, match="unsupported-camera-model: RADIAL"):
            import_colmap(model)

    def test_camera_parse_error_names_file_and_line(self, tmp_path):
        model = two_view_model(
            tmp_path,
            cameras_txt="1 SIMPLE_PINHOLE 8 8 500 4.0 4.0\n"
                        "2 PINHOLE eight 8 400 400 4 4\n")
        with pytest.raises(DatasetError, match=r"parse-error: cameras\.txt:3"):
            import_colmap(model)

    def test_short_pose_line_names_file_and_line(self, tmp_path):
        model = write_model(
            tmp_path,
            "1 SIMPLE_PINHOLE 8 8 500 4.0 4.0\n",
            "1 1 0 0 0 0 0 0 1\n\n",
        )
        with pytest.raises(DatasetError, match=r"parse-error: images\.txt:2"):
            import_colmap(model)

    def test_missing_model_file(self, tmp_path):
        model = two_view_model(tmp_path)
        (model / "points3D.txt").unlink()
        with pytest.raises(DatasetError, match="missing COLMAP file"):
            import_colmap(model)

    def test_missing_camera_reference(self, tmp_path):
        model = write_model(
            tmp_path,
            "1 SIMPLE_PINHOLE 8 8 500 4.0 4.0\n",
            "1 1 0 0 0 0 0 0 9 view_000.png\n\n"
            "2 1 0 0 0 0 0 0 1 view_001.png\n\n",
            image_arrays={
                f"view_{i:03d}.png": np.full((8, 8, 3), 0.5) for i in range(2)
            },
        )
        with pytest.raises(DatasetError, match="missing-camera-entry"):
            import_colmap(model)

    def test_image_camera_dimension_mismatch(self, tmp_path, rng):
        model = write_model(
            tmp_path,
            "1 SIMPLE_PINHOLE 8 8 500 4.0 4.0\n",
            "1 1 0 0 0 0 0 0 1 view_000.png\n\n"
            "2 1 0 0 0 0 0 0 1 view_001.png\n\n",
            image_arrays={
                "view_000.png": rng.uniform(size=(6, 6, 3)),
                "view_001.png": rng.uniform(size=(8, 8, 3)),
            },
        )
        with pytest.raises(DatasetError, match="dimension-mismatch"):
            import_colmap(model)

    def test_no_images_directory(self, tmp_path):
        model = tmp_path / "colmap"
        model.mkdir()
        for fname, content in (("cameras.txt", ""), ("images.txt", ""),
                               ("points3D.txt", "")):
            (model / fname).write_text(content)
        with pytest.raises(DatasetError, match="images/"):
            import_colmap(model)


class TestExportRoundTrip:
    def _dataset(self, tmp_path, rng, n_views=3, size=10):
        views = []
        for i in range(n_views):
            cam = ring_camera(i, angle=2 * np.pi * i / n_views, size=size,
                              focal=123.456789)
            img = rng.uniform(size=(size, size, 3))
            img = np.round(img * 255.0) / 255.0  # pre-quantize for exactness
            mask = np.zeros((size, size), dtype=np.float32)
            views.append(SceneView(camera=cam, image=img.astype(np.float32),
                                   mask=mask, name=f"view_{i:03d}"))
        pts = rng.uniform(-1, 1, size=(5, 3))
        cols = np.round(rng.uniform(size=(5, 3)) * 255.0) / 255.0
        return SceneDataset(views=views, sfm_points=pts, sfm_colors=cols,
                            name="roundtrip")

    def test_export_import_matches_original(self, tmp_path, rng):
        ds = self._dataset(tmp_path, rng)
        out = tmp_path / "colmap"
        export_colmap(ds, out)
        img_dir = tmp_path / "images"
        img_dir.mkdir()
        for view in ds.views:
            save_image(img_dir / f"{view.name}.png", view.image)

        back = import_colmap(out)
        assert len(back.views) == len(ds.views)
        for orig, got in zip(ds.views, back.views):
            a, b = orig.camera, got.camera
            assert b.cam_id == a.cam_id
            np.testing.assert_allclose(
                [b.fx, b.fy, b.cx, b.cy], [a.fx, a.fy, a.cx, a.cy],
                rtol=1e-10)
            np.testing.assert_allclose(b.qvec, a.qvec, atol=1e-15)
            np.testing.assert_allclose(b.tvec, a.tvec, atol=1e-15)
            np.testing.assert_allclose(got.image, orig.image, atol=1e-6)
            assert got.name == orig.name
        np.testing.assert_allclose(back.sfm_points, ds.sfm_points, rtol=1e-12)
        np.testing.assert_allclose(back.sfm_colors, ds.sfm_colors, atol=1e-12)

    def test_exported_principal_point_uses_corner_origin(self, tmp_path, rng):
        ds = self._dataset(tmp_path, rng, n_views=2)
        out = tmp_path / "colmap"
        export_colmap(ds, out)
        line = [
            ln for ln in (out / "cameras.txt").read_text().splitlines()
            if ln and not ln.startswith("#")
        ][0]
        cx_txt = float(line.split()[6])
        assert cx_txt == ds.views[0].camera.cx + 0.5
