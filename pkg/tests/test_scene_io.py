import json

import numpy as np
import pytest

from splatpaint.cloud import init_cloud, load_cloud, save_cloud
from splatpaint.errors import CloudFormatError, DatasetError, DimensionMismatch
from splatpaint.scene import (
    SceneDataset,
    load_dataset,
    load_image,
    load_mask,
    save_cameras_json,
    save_image,
    save_mask,
    train_test_split,
    validate_image,
    validate_mask,
)

from conftest import random_cloud, ring_camera


class TestImageIO:
    def test_round_trip_quantized(self, tmp_path, rng):
        img = rng.uniform(0, 1, (12, 9, 3))
        path = tmp_path / "img.png"
        save_image(path, img)
        back = load_image(path)
        assert back.shape == (12, 9, 3)
        assert back.dtype == np.float32
        assert np.abs(back - img).max() <= 0.5 / 255 + 1e-6

    def test_mask_round_trip(self, tmp_path, rng):
        mask = (rng.uniform(0, 1, (8, 8)) > 0.5).astype(np.float32)
        path = tmp_path / "m.png"
        save_mask(path, mask)
        np.testing.assert_array_equal(load_mask(path), mask)

    def test_unreadable_image(self, tmp_path):
        bad = tmp_path / "broken.png"
        bad.write_bytes(b"not a png")
        with pytest.raises(DatasetError, match="unreadable-image"):
            load_image(bad)

    def test_validate_image(self):
        with pytest.raises(DimensionMismatch):
            validate_image(np.zeros((4, 4)))
        with pytest.raises(DatasetError):
            validate_image(np.full((4, 4, 3), 1.5))
        with pytest.raises(DatasetError):
            validate_image(np.full((4, 4, 3), np.nan))
        validate_image(np.zeros((4, 4, 3)))

    def test_validate_mask(self):
        with pytest.raises(DimensionMismatch):
            validate_mask(np.zeros((3, 4)), (4, 4))
        with pytest.raises(DatasetError):
            validate_mask(np.full((4, 4), 2.0), (4, 4))
        validate_mask(np.ones((4, 4)), (4, 4))


class TestCloudIO:
    def test_ply_round_trip_exact(self, tmp_path, rng):
        cloud = random_cloud(rng, 17, sh_degree=2)
        path = tmp_path / "cloud.ply"
        save_cloud(path, cloud)
        back = load_cloud(path)
        np.testing.assert_array_equal(back.means, cloud.means)
        np.testing.assert_array_equal(back.log_scales, cloud.log_scales)
        np.testing.assert_array_equal(back.quats, cloud.quats)
        np.testing.assert_array_equal(back.opacities, cloud.opacities)
        np.testing.assert_array_equal(back.sh, cloud.sh)

    def test_empty_cloud_round_trip(self, tmp_path):
        cloud = init_cloud(np.zeros((1, 3)), np.full((1, 3), 0.5))
        path = tmp_path / "one.ply"
        save_cloud(path, cloud)
        back = load_cloud(path)
        assert len(back) == 1

    def test_corrupt_header(self, tmp_path):
        path = tmp_path / "bad.ply"
        path.write_bytes(b"ply\nformat ascii 1.0\n")
        with pytest.raises(CloudFormatError):
            load_cloud(path)

    def test_truncated_body(self, tmp_path, rng):
        cloud = random_cloud(rng, 5)
        path = tmp_path / "cut.ply"
        save_cloud(path, cloud)
        data = path.read_bytes()
        path.write_bytes(data[:-40])
        with pytest.raises(CloudFormatError, match="truncated"):
            load_cloud(path)

    def test_init_cloud_from_points(self, rng):
        pts = rng.uniform(-1, 1, (50, 3))
        cols = rng.uniform(0, 1, (50, 3))
        cloud = init_cloud(pts, cols, sh_degree=1)
        assert len(cloud) == 50
        assert cloud.sh.shape == (50, 4, 3)
        np.testing.assert_allclose(cloud.alphas(), 0.1, atol=1e-12)
        # isotropic scales from neighbor spacing, never degenerate
        assert np.exp(cloud.log_scales).min() >= 1e-4
        np.testing.assert_array_equal(
            cloud.log_scales[:, 0], cloud.log_scales[:, 1]
        )


def write_scene(tmp_path, rng, n_views=4, size=12):
    scene = tmp_path / "scene"
    (scene / "images").mkdir(parents=True)
    cams = []
    for i in range(n_views):
        cam = ring_camera(i, 2 * np.pi * i / n_views, size=size)
        img = rng.uniform(0, 1, (size, size, 3))
        save_image(scene / "images" / f"view_{i:03d}.png", img)
        cams.append(cam)
    save_cameras_json(scene / "cameras.json", cams)
    pts = rng.uniform(-1, 1, (20, 3))
    cols = rng.integers(0, 256, (20, 3))
    rows = [list(map(float, p)) + list(map(int, c)) for p, c in zip(pts, cols)]
    (scene / "points3d.json").write_text(json.dumps(rows))
    return scene


class TestDataset:
    def test_load_scene_dir(self, tmp_path, rng):
        scene = write_scene(tmp_path, rng)
        ds = load_dataset(scene)
        assert len(ds.views) == 4
        assert ds.sfm_points.shape == (20, 3)
        assert ds.sfm_colors.max() <= 1.0
        assert ds.views[0].name == "view_000"
        # no masks directory: all-zero masks
        assert all(np.all(v.mask == 0) for v in ds.views)

    def test_missing_camera_entry(self, tmp_path, rng):
        scene = write_scene(tmp_path, rng)
        cams_file = scene / "cameras.json"
        entries = json.loads(cams_file.read_text())
        cams_file.write_text(json.dumps(entries[:-1]))
        with pytest.raises(DatasetError, match="missing-camera-entry"):
            load_dataset(scene)

    def test_dimension_mismatch(self, tmp_path, rng):
        scene = write_scene(tmp_path, rng)
        save_image(
            scene / "images" / "view_000.png", rng.uniform(0, 1, (7, 5, 3))
        )
        with pytest.raises(DimensionMismatch):
            load_dataset(scene)

    def test_needs_two_views(self, tmp_path, rng):
        scene = write_scene(tmp_path, rng, n_views=1)
        with pytest.raises(DatasetError):
            load_dataset(scene)


class TestSplit:
    def test_interleaved_60_40(self, tmp_path, rng):
        scene = write_scene(tmp_path, rng, n_views=5)
        ds = load_dataset(scene)
        train_ds, test_ds = train_test_split(ds, ratio=0.6)
        train_names = [v.name for v in train_ds.views]
        test_names = [v.name for v in test_ds.views]
        # accumulator walk: 0.6, 1.2*, 0.8, 1.4*, 1.0* (* = train)
        assert train_names == ["view_001", "view_003", "view_004"]
        assert test_names == ["view_000", "view_002"]

    def test_partition(self, tmp_path, rng):
        scene = write_scene(tmp_path, rng, n_views=4)
        ds = load_dataset(scene)
        a, b = train_test_split(ds, ratio=0.5)
        names = sorted(v.name for v in a.views) + sorted(
            v.name for v in b.views
        )
        assert sorted(names) == sorted(v.name for v in ds.views)
