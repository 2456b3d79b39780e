"""Command-line entry points.

Subcommands mirror the library surface: scene generation, training,
rendering, uncertainty maps, the alternating inpainting pipeline, the
sparsity study, and metric reports. Outputs are plain files (PNG, npy,
CSV) so runs are scriptable and diffable.
"""

from __future__ import annotations

import json
from dataclasses import fields as dc_fields
from pathlib import Path

import click
import numpy as np
import yaml

from .cloud import init_cloud, load_cloud, save_cloud
from .errors import SplatpaintError
from .fixtures import SCENE_KINDS, generate_scene
from .metrics import masked_bbox_crop, psnr, ssim
from .pipeline import (
    PipelineConfig,
    resolve_backend,
    viewpoint_sparsity_study,
    run_refinement,
)
from .render import render
from .reporting import (
    metrics_csv,
    pipeline_csv,
    pipeline_figure,
    save_heatmap,
    sparsity_csv,
    sparsity_figure,
    training_log_csv,
    write_csv,
)
from .scene import (
    _parse_camera_entry,
    load_cameras_json,
    load_dataset,
    load_image,
    load_mask,
    save_depth_png,
    save_image,
)
from .track_masks import ingest_track_masks, union_masks
from .training import TrainConfig, train
from .visibility import AdjacencySpec, fuse_mask, uncertainty_map


@click.group()
def main() -> None:
    """Gaussian-splat reconstruction with uncertainty-guided inpainting."""


def _fail(err: Exception) -> None:
    raise click.ClickException(str(err))


@main.command("testgen")
@click.option("--kind", type=click.Choice(SCENE_KINDS), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-dir", type=click.Path(path_type=Path), required=True)
def testgen_cmd(kind: str, seed: int, out_dir: Path) -> None:
    """Generate a procedural benchmark scene."""
    manifest = generate_scene(kind, seed, out_dir)
    click.echo(f"wrote {manifest['views']} views to {out_dir}")


@main.command("reconstruct")
@click.option("--scene", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("--weights-dir", type=click.Path(exists=True, path_type=Path),
              default=None, help="Per-view PNG weight maps named after views.")
@click.option("--iters", type=int, default=4000, show_default=True)
@click.option("--max-splats", type=int, default=200_000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True,
              help="Output cloud file.")
@click.option("--log", "log_path", type=click.Path(path_type=Path),
              default=None, help="CSV of (iteration, loss, psnr, size).")
def reconstruct_cmd(scene: Path, weights_dir: Path | None, iters: int,
                    max_splats: int, seed: int, out: Path,
                    log_path: Path | None) -> None:
    """Fit a splat cloud to a scene directory."""
    try:
        dataset = load_dataset(scene)
        weights = None
        if weights_dir is not None:
            weights = [
                load_mask(weights_dir / f"{v.name}.png")
                if (weights_dir / f"{v.name}.png").exists()
                else np.ones(v.image.shape[:2], dtype=np.float32)
                for v in dataset.views
            ]
        cfg = TrainConfig(iterations=iters, max_splats=max_splats, seed=seed)
        cloud = init_cloud(dataset.sfm_points, dataset.sfm_colors)
        cloud, log = train(cloud, dataset, weights, cfg)
        out.parent.mkdir(parents=True, exist_ok=True)
        save_cloud(out, cloud)
    except SplatpaintError as err:
        _fail(err)
    if log_path is not None:
        training_log_csv(log_path, log)
    click.echo(
        f"trained {len(cloud)} splats, final train PSNR "
        f"{log[-1].psnr:.2f} dB -> {out}"
    )


def _camera_from_pose_file(path: Path):
    data = json.loads(path.read_text())
    if isinstance(data, list):
        data = data[0]
    return _parse_camera_entry(data)


@main.command("render")
@click.option("--cloud", "cloud_path",
              type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--scene", type=click.Path(exists=True, path_type=Path),
              default=None, help="Scene directory providing cameras.")
@click.option("--camera-id", type=int, default=None)
@click.option("--pose", type=click.Path(exists=True, path_type=Path),
              default=None, help="JSON file with one cameras.json entry.")
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--depth-out", type=click.Path(path_type=Path), default=None,
              help="16-bit PNG, depth in millimeters.")
def render_cmd(cloud_path: Path, scene: Path | None, camera_id: int | None,
               pose: Path | None, out: Path, depth_out: Path | None) -> None:
    """Render one view of a saved cloud."""
    if (camera_id is None) == (pose is None):
        raise click.UsageError("give exactly one of --camera-id or --pose")
    try:
        cloud = load_cloud(cloud_path)
        if pose is not None:
            camera = _camera_from_pose_file(pose)
        else:
            if scene is None:
                raise click.UsageError("--camera-id needs --scene")
            cameras = load_cameras_json(Path(scene) / "cameras.json")
            matches = [c for c in cameras if c.cam_id == camera_id]
            if not matches:
                raise click.ClickException(
                    f"camera id {camera_id} not in {scene}")
            camera = matches[0]
        result = render(cloud, camera)
        out.parent.mkdir(parents=True, exist_ok=True)
        save_image(out, result.color)
        if depth_out is not None:
            save_depth_png(depth_out, result.depth)
    except SplatpaintError as err:
        _fail(err)
    click.echo(f"rendered camera {camera.cam_id} -> {out}")


def _apply_track_masks(dataset, track_dir: Path | None):
    if track_dir is None:
        return dataset
    tracked = ingest_track_masks(track_dir, dataset)
    merged = union_masks([v.mask for v in dataset.views], tracked)
    for view, mask in zip(dataset.views, merged):
        view.mask = mask
    return dataset


@main.command("uncertainty")
@click.option("--scene", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("--cloud", "cloud_path",
              type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--view-id", type=int, default=None,
              help="Single view; omit with --all for every view.")
@click.option("--all", "do_all", is_flag=True)
@click.option("--v", "v_adjacent", type=int, default=4, show_default=True,
              help="Number of neighboring views that vote.")
@click.option("--tau-d", type=float, default=0.05, show_default=True,
              help="Relative depth tolerance for a valid vote.")
@click.option("--theta", type=float, default=0.0, show_default=True,
              help="Mask-region trust used in the fused map.")
@click.option("--track-masks", type=click.Path(exists=True, path_type=Path),
              default=None)
@click.option("--out-dir", type=click.Path(path_type=Path), required=True)
def uncertainty_cmd(scene: Path, cloud_path: Path, view_id: int | None,
                    do_all: bool, v_adjacent: int, tau_d: float,
                    theta: float, track_masks: Path | None,
                    out_dir: Path) -> None:
    """Write uncertainty and fused-mask maps for chosen views."""
    if (view_id is None) == (not do_all):
        raise click.UsageError("give exactly one of --view-id or --all")
    try:
        dataset = _apply_track_masks(load_dataset(scene), track_masks)
        cloud = load_cloud(cloud_path)
        indices = range(len(dataset.views)) if do_all else [view_id]
        out_dir.mkdir(parents=True, exist_ok=True)
        spec = AdjacencySpec(v_adjacent)
        for i in indices:
            view = dataset.views[i]
            u_map = uncertainty_map(cloud, dataset, i, spec=spec, tau_d=tau_d)
            fused = fuse_mask(u_map, view.mask, theta)
            save_heatmap(out_dir / f"{view.name}_uncertainty.png", u_map)
            save_heatmap(out_dir / f"{view.name}_fused.png", fused)
            np.save(out_dir / f"{view.name}_uncertainty.npy", u_map)
            np.save(out_dir / f"{view.name}_fused.npy", fused)
    except SplatpaintError as err:
        _fail(err)
    click.echo(f"wrote maps for {len(list(indices))} views to {out_dir}")


def _load_pipeline_config(path: Path | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    data = yaml.safe_load(path.read_text()) or {}
    if not isinstance(data, dict):
        raise click.ClickException(f"{path}: expected a mapping")
    train_data = data.pop("train", {})
    known = {f.name for f in dc_fields(PipelineConfig)}
    unknown = set(data) - known
    if unknown:
        raise click.ClickException(
            f"{path}: unknown pipeline keys {sorted(unknown)}")
    train_known = {f.name for f in dc_fields(TrainConfig)}
    bad_train = set(train_data) - train_known
    if bad_train:
        raise click.ClickException(
            f"{path}: unknown train keys {sorted(bad_train)}")
    return PipelineConfig(train=TrainConfig(**train_data), **data)


@main.command("pipeline")
@click.option("--scene", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("--config", "config_path",
              type=click.Path(exists=True, path_type=Path), default=None,
              help="YAML mapping mirroring the pipeline config "
                   "(nested 'train' section for optimizer settings).")
@click.option("--backend", default="mock", show_default=True,
              help="'mock' or an http(s) service URL.")
@click.option("--track-masks", type=click.Path(exists=True, path_type=Path),
              default=None)
@click.option("--out-dir", type=click.Path(path_type=Path), required=True)
def pipeline_cmd(scene: Path, config_path: Path | None, backend: str,
                 track_masks: Path | None, out_dir: Path) -> None:
    """Run the alternating reconstruct-and-inpaint loop on a scene."""
    config = _load_pipeline_config(config_path)
    config.backend = backend
    try:
        dataset = _apply_track_masks(load_dataset(scene), track_masks)
        cloud, report = run_refinement(dataset, config,
                                  backend=resolve_backend(backend))
        out_dir.mkdir(parents=True, exist_ok=True)
        save_cloud(out_dir / "final_cloud.npz", cloud)
        for cyc in report.cycles:
            cdir = out_dir / f"cycle_{cyc.index:02d}"
            cdir.mkdir(exist_ok=True)
            save_cloud(cdir / "cloud.npz", cyc.cloud)
            for stem, u_map, fused, filled in zip(
                    report.view_names, cyc.uncertainty, cyc.fused,
                    cyc.inpainted):
                save_heatmap(cdir / f"{stem}_uncertainty.png", u_map)
                save_heatmap(cdir / f"{stem}_fused.png", fused)
                save_image(cdir / f"{stem}_inpainted.png",
                           np.clip(filled, 0.0, 1.0))
        pipeline_csv(out_dir / "report.csv", report)
        pipeline_figure(out_dir / "report.png", report)
    except SplatpaintError as err:
        _fail(err)
    last = report.cycles[-1]
    click.echo(
        f"{len(report.cycles)} cycles, final train PSNR "
        f"{last.train_psnr:.2f} dB -> {out_dir}"
    )


@main.command("study")
@click.option("--scene", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("--intervals", default="1,2,4",
              show_default=True, help="Comma-separated view intervals.")
@click.option("--config", "config_path",
              type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--backend", default="mock", show_default=True)
@click.option("--out-dir", type=click.Path(path_type=Path), required=True)
def study_cmd(scene: Path, intervals: str, config_path: Path | None,
              backend: str, out_dir: Path) -> None:
    """Viewpoint-sparsity study: reconstruction quality vs view count."""
    config = _load_pipeline_config(config_path)
    config.backend = backend
    try:
        parsed = [int(tok) for tok in intervals.split(",") if tok.strip()]
    except ValueError:
        raise click.UsageError(f"bad --intervals {intervals!r}")
    try:
        dataset = load_dataset(scene)
        rows = viewpoint_sparsity_study(
            dataset, parsed, config, backend=resolve_backend(backend))
        out_dir.mkdir(parents=True, exist_ok=True)
        sparsity_csv(out_dir / "sparsity.csv", rows)
        sparsity_figure(out_dir / "sparsity.png", rows)
    except (SplatpaintError, ValueError) as err:
        _fail(err)
    click.echo(f"{len(rows)} intervals -> {out_dir}")


@main.command("metrics")
@click.option("--ref-dir", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("--test-dir", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("--masks-dir", type=click.Path(exists=True, path_type=Path),
              default=None,
              help="Optional masks; scores crop to each mask's bbox.")
@click.option("--out", type=click.Path(path_type=Path), required=True)
def metrics_cmd(ref_dir: Path, test_dir: Path, masks_dir: Path | None,
                out: Path) -> None:
    """Score matching PNGs in two directories; write a CSV report."""
    refs = sorted(ref_dir.glob("*.png"))
    if not refs:
        raise click.ClickException(f"no PNGs under {ref_dir}")
    rows = []
    try:
        for ref_path in refs:
            test_path = test_dir / ref_path.name
            if not test_path.exists():
                raise click.ClickException(
                    f"{test_path} missing for reference {ref_path.name}")
            ref = load_image(ref_path)
            tst = load_image(test_path)
            if masks_dir is not None:
                mask = load_mask(masks_dir / ref_path.name)
                ref = masked_bbox_crop(ref, mask)
                tst = masked_bbox_crop(tst, mask)
            rows.append((ref_path.stem, psnr(ref, tst), ssim(ref, tst)))
        metrics_csv(out, rows)
    except (SplatpaintError, ValueError) as err:
        _fail(err)
    click.echo(f"{len(rows)} views scored -> {out}")


if __name__ == "__main__":
    main()
