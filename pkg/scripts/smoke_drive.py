#!/usr/bin/env python3
"""End-to-end smoke drive of the public library surface.

Builds a tiny synthetic scene, then walks the whole flow: render both
paths, train briefly, score uncertainty, fuse masks, and inpaint with
the oracle backend. Prints one `ok:` line per stage; any assertion or
exception fails the drive.
"""

import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from splatpaint import (
    IdentityBackend,
    NoiseSchedule,
    OracleBackend,
    TrainConfig,
    concept_inpaint_local,
    fuse_mask,
    init_cloud,
    render,
    render_naive,
    train,
    uncertainty_map,
)
from splatpaint.geometry import look_at_camera
from splatpaint.scene import SceneDataset, SceneView
from splatpaint.schedule import IdentityCodec, OracleDenoiser
from splatpaint.visibility import AdjacencySpec


def ring_scene(rng, n_views=6, size=32):
    pts = rng.uniform(-0.5, 0.5, size=(120, 3)) * [1.0, 1.0, 0.2]
    cols = rng.uniform(0.2, 0.8, size=(120, 3))
    cloud = init_cloud(pts, cols)
    cloud.opacities[:] = 4.0
    views = []
    for i in range(n_views):
        angle = 2.0 * np.pi * i / n_views
        pos = np.array([2.2 * np.cos(angle), 2.2 * np.sin(angle), 1.8])
        cam = look_at_camera(i, pos, np.zeros(3), 30.0, 30.0, size, size)
        out = render(cloud, cam)
        views.append(SceneView(camera=cam, image=out.color,
                               mask=np.zeros((size, size)), name=f"v{i}"))
    return SceneDataset(views=views, sfm_points=pts, sfm_colors=cols,
                        name="smoke"), pts, cols


def main() -> int:
    rng = np.random.default_rng(7)
    dataset, pts, cols = ring_scene(rng)

    cloud = init_cloud(pts, cols)
    cam = dataset.views[0].camera
    tiled = render(cloud, cam)
    naive = render_naive(cloud, cam)
    gap = np.abs(tiled.color - naive.color).max()
    assert gap <= 1e-6, f"render paths disagree by {gap}"
    print(f"ok: render dual paths agree (max gap {gap:.2e})")

    config = TrainConfig(iterations=60, densify_interval=10**9)
    trained, log = train(cloud, dataset, None, config)
    assert log[-1].loss < log[0].loss, "training loss did not decrease"
    print(f"ok: training loss {log[0].loss:.4f} -> {log[-1].loss:.4f}")

    umap = uncertainty_map(trained, dataset, 0, AdjacencySpec(4))
    assert umap.shape == (32, 32) and umap.min() >= 0.0 and umap.max() <= 1.0
    print(f"ok: uncertainty map in range (mean {umap.mean():.3f})")

    mask = np.zeros((32, 32))
    mask[10:20, 10:20] = 1.0
    fused = fuse_mask(umap, mask, 0.1)
    assert fused.shape == mask.shape
    print("ok: mask fusion")

    img = dataset.views[0].image.astype(np.float64)
    sched = NoiseSchedule()
    sched.sigmas = np.zeros_like(sched.sigmas)
    codec = IdentityCodec()
    denoiser = OracleDenoiser(codec.encode(img), sched)
    filled = concept_inpaint_local(img, mask, denoiser, "c", codec,
                                   1.0, 25, sched, np.random.default_rng(0))
    masked_mse = float(np.mean((filled - img)[mask > 0.5] ** 2))
    assert masked_mse <= 1e-3, f"oracle inpaint MSE {masked_mse}"
    np.testing.assert_array_equal(filled[mask == 0.0], img[mask == 0.0])
    print(f"ok: local masked inpaint (masked MSE {masked_mse:.2e})")

    clean = rng.uniform(0.2, 0.8, size=img.shape)
    backend = OracleBackend([img], [clean])
    handle = backend.learn_concept([img], [mask])
    out = backend.inpaint(img, mask, handle, 1.0)
    np.testing.assert_array_equal(out[mask == 0.0], img[mask == 0.0])
    np.testing.assert_array_equal(out[mask == 1.0], clean[mask == 1.0])
    ident = IdentityBackend()
    np.testing.assert_array_equal(
        ident.inpaint(img, mask, ident.learn_concept([img], [mask]), 1.0),
        img)
    print("ok: backend contracts (oracle + identity)")

    cli_drive()

    print("smoke drive passed")
    return 0


def cli_drive() -> None:
    """Exercise the installed console entry point end to end."""

    def run(*args):
        subprocess.run([sys.executable, "-m", "splatpaint.cli", *args],
                       check=True, capture_output=True, text=True)

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        scene = tmp / "scene"
        run("testgen", "--kind", "plane24", "--seed", "1",
            "--out-dir", str(scene))
        cloud = tmp / "cloud.npz"
        run("reconstruct", "--scene", str(scene), "--iters", "40",
            "--out", str(cloud), "--log", str(tmp / "log.csv"))
        run("render", "--cloud", str(cloud), "--scene", str(scene),
            "--camera-id", "0", "--out", str(tmp / "r.png"))
        run("uncertainty", "--scene", str(scene), "--cloud", str(cloud),
            "--view-id", "0", "--out-dir", str(tmp / "maps"))
        for name in ("r.png", "log.csv", "maps/view_000_uncertainty.png",
                     "maps/view_000_fused.npy"):
            assert (tmp / name).exists(), f"CLI left no {name}"
    print("ok: CLI drive (testgen/reconstruct/render/uncertainty)")


if __name__ == "__main__":
    sys.exit(main())
