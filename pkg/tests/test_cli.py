import numpy as np
import pytest
from click.testing import CliRunner

from splatpaint.cli import main
from splatpaint.render import render
from splatpaint.scene import load_cameras_json, load_image, save_image, save_mask


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def scene_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "scene"
    result = CliRunner().invoke(
        main, ["testgen", "--kind", "plane24", "--seed", "3",
               "--out-dir", str(out)])
    assert result.exit_code == 0, result.output
    return out


@pytest.fixture(scope="module")
def cloud_file(runner, scene_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli-cloud") / "cloud.npz"
    log = out.with_name("train_log.csv")
    result = runner.invoke(main, [
        "reconstruct", "--scene", str(scene_dir), "--iters", "60",
        "--max-splats", "3000", "--out", str(out), "--log", str(log),
    ])
    assert result.exit_code == 0, result.output
    assert log.exists()
    header, first = log.read_text().splitlines()[:2]
    assert header == "iteration,loss,psnr,num_splats"
    assert first.startswith("1,")
    return out


class TestTestgen:
    def test_writes_a_loadable_scene(self, scene_dir):
        assert (scene_dir / "cameras.json").exists()
        assert (scene_dir / "manifest.json").exists()
        assert len(list((scene_dir / "images").glob("*.png"))) == 24

    def test_rejects_unknown_kind(self, runner, tmp_path):
        result = runner.invoke(
            main, ["testgen", "--kind", "torus", "--out-dir", str(tmp_path)])
        assert result.exit_code != 0


class TestRender:
    def test_renders_by_camera_id(self, runner, scene_dir, cloud_file,
                                  tmp_path):
        out = tmp_path / "render.png"
        depth = tmp_path / "depth.png"
        result = runner.invoke(main, [
            "render", "--cloud", str(cloud_file), "--scene", str(scene_dir),
            "--camera-id", "5", "--out", str(out), "--depth-out", str(depth),
        ])
        assert result.exit_code == 0, result.output
        assert load_image(out).shape == (64, 64, 3)
        assert depth.exists()

    def test_renders_by_pose_file(self, runner, scene_dir, cloud_file,
                                  tmp_path):
        cams = (scene_dir / "cameras.json").read_text()
        import json
        pose = tmp_path / "pose.json"
        pose.write_text(json.dumps(json.loads(cams)[2]))
        out = tmp_path / "pose_render.png"
        result = runner.invoke(main, [
            "render", "--cloud", str(cloud_file), "--pose", str(pose),
            "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        # must match the equivalent --camera-id render bit for bit
        by_id = tmp_path / "id_render.png"
        result = runner.invoke(main, [
            "render", "--cloud", str(cloud_file), "--scene", str(scene_dir),
            "--camera-id", "2", "--out", str(by_id),
        ])
        assert result.exit_code == 0
        assert out.read_bytes() == by_id.read_bytes()

    def test_requires_exactly_one_camera_source(self, runner, cloud_file):
        result = runner.invoke(
            main, ["render", "--cloud", str(cloud_file), "--out", "x.png"])
        assert result.exit_code != 0
        assert "exactly one" in result.output

    def test_unknown_camera_id_fails_cleanly(self, runner, scene_dir,
                                             cloud_file, tmp_path):
        result = runner.invoke(main, [
            "render", "--cloud", str(cloud_file), "--scene", str(scene_dir),
            "--camera-id", "99", "--out", str(tmp_path / "x.png"),
        ])
        assert result.exit_code != 0
        assert "99" in result.output


class TestUncertainty:
    def test_writes_heatmaps_and_float_maps(self, runner, scene_dir,
                                            cloud_file, tmp_path):
        out = tmp_path / "maps"
        result = runner.invoke(main, [
            "uncertainty", "--scene", str(scene_dir), "--cloud",
            str(cloud_file), "--view-id", "0", "--theta", "0.3",
            "--out-dir", str(out),
        ])
        assert result.exit_code == 0, result.output
        u = np.load(out / "view_000_uncertainty.npy")
        f = np.load(out / "view_000_fused.npy")
        assert u.shape == f.shape == (64, 64)
        # no mask anywhere, so the fused map equals the uncertainty map
        np.testing.assert_array_equal(u, f)
        assert (out / "view_000_uncertainty.png").exists()

    def test_exactly_one_view_selector(self, runner, scene_dir, cloud_file):
        result = runner.invoke(main, [
            "uncertainty", "--scene", str(scene_dir),
            "--cloud", str(cloud_file), "--out-dir", "maps",
        ])
        assert result.exit_code != 0
        assert "exactly one" in result.output


class TestMetrics:
    def make_dirs(self, tmp_path):
        rng = np.random.default_rng(9)
        ref, tst, msk = tmp_path / "ref", tmp_path / "tst", tmp_path / "msk"
        for d in (ref, tst, msk):
            d.mkdir()
        for name in ("a.png", "b.png"):
            img = rng.uniform(0.2, 0.8, (16, 16, 3))
            save_image(ref / name, img)
            save_image(tst / name, np.clip(img + 0.05, 0, 1))
            mask = np.zeros((16, 16), np.float32)
            mask[4:9, 5:12] = 1.0
            save_mask(msk / name, mask)
        return ref, tst, msk

    def test_scores_matching_files(self, runner, tmp_path):
        ref, tst, _ = self.make_dirs(tmp_path)
        out = tmp_path / "report.csv"
        result = runner.invoke(main, [
            "metrics", "--ref-dir", str(ref), "--test-dir", str(tst),
            "--out", str(out)])
        assert result.exit_code == 0, result.output
        lines = out.read_text().splitlines()
        assert lines[0] == "view,psnr,ssim,lpips,fid"
        assert len(lines) == 4  # a, b, mean
        assert lines[-1].startswith("mean,")

    def test_masks_trigger_the_bbox_protocol(self, runner, tmp_path):
        ref, tst, msk = self.make_dirs(tmp_path)
        plain = tmp_path / "plain.csv"
        boxed = tmp_path / "boxed.csv"
        r1 = runner.invoke(main, ["metrics", "--ref-dir", str(ref),
                                  "--test-dir", str(tst), "--out", str(plain)])
        r2 = runner.invoke(main, ["metrics", "--ref-dir", str(ref),
                                  "--test-dir", str(tst), "--masks-dir",
                                  str(msk), "--out", str(boxed)])
        assert r1.exit_code == 0 and r2.exit_code == 0
        assert plain.read_text() != boxed.read_text()

    def test_missing_test_image_fails(self, runner, tmp_path):
        ref, tst, _ = self.make_dirs(tmp_path)
        (tst / "b.png").unlink()
        result = runner.invoke(main, [
            "metrics", "--ref-dir", str(ref), "--test-dir", str(tst),
            "--out", str(tmp_path / "x.csv")])
        assert result.exit_code != 0
        assert "b.png" in result.output


class TestPipelineCommand:
    def test_full_run_emits_artifacts(self, runner, tmp_path):
        # a genuinely tiny scene keeps this an interface test, not a
        # quality benchmark
        from splatpaint.cloud import save_cloud  # noqa: F401
        from conftest import random_cloud, ring_camera
        from splatpaint.scene import SceneDataset, SceneView, save_cameras_json
        import json as _json

        rng = np.random.default_rng(2)
        gt = random_cloud(rng, 30)
        scene = tmp_path / "scene"
        (scene / "images").mkdir(parents=True)
        cams = []
        for i in range(6):
            cam = ring_camera(i, 2 * np.pi * i / 6, size=16)
            cams.append(cam)
            img = render(gt, cam, dtype=np.float32).color
            save_image(scene / "images" / f"view_{i:03d}.png", img)
        save_cameras_json(scene / "cameras.json", cams)
        pts = rng.uniform(-0.5, 0.5, (50, 3)).tolist()
        rows = [[*p, 128.0, 128.0, 128.0] for p in pts]
        (scene / "points3d.json").write_text(_json.dumps(rows))

        cfg = tmp_path / "cfg.yaml"
        cfg.write_text(
            "cycles: 2\nseed: 1\ntrain:\n  iterations: 30\n"
            "  densify_from: 10000\n")
        out = tmp_path / "run"
        result = runner.invoke(main, [
            "pipeline", "--scene", str(scene), "--config", str(cfg),
            "--backend", "mock", "--out-dir", str(out)])
        assert result.exit_code == 0, result.output
        assert (out / "final_cloud.npz").exists()
        assert (out / "report.png").exists()
        lines = (out / "report.csv").read_text().splitlines()
        assert lines[0].startswith("cycle,theta,strength,train_psnr")
        assert len(lines) == 4  # header, initial, two cycles
        for k in (1, 2):
            cdir = out / f"cycle_{k:02d}"
            assert (cdir / "cloud.npz").exists()
            assert (cdir / "view_000_uncertainty.png").exists()
            assert (cdir / "view_000_fused.png").exists()
            assert (cdir / "view_000_inpainted.png").exists()

    def test_unknown_config_key_fails(self, runner, tmp_path):
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text("cycle_count: 3\n")
        scene = tmp_path / "nope"
        scene.mkdir()
        result = runner.invoke(main, [
            "pipeline", "--scene", str(scene), "--config", str(cfg),
            "--out-dir", str(tmp_path / "o")])
        assert result.exit_code != 0
        assert "cycle_count" in result.output
