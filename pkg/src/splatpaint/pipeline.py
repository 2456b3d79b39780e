"""Alternating reconstruct-and-inpaint orchestration.

One run is: an initial photometric fit, then K cycles that each (a)
score every training pixel by cross-view visibility uncertainty, (b)
fuse those scores with the user masks under a trust schedule, (c)
retrain the cloud with the fused map down-weighting unreliable pixels,
and (d) ask an inpainting backend to refill the masked regions of the
raw captures. Inpainted frames join the next cycle's supervision at
full weight while the raw frames stay in as an anchor, so content the
backend invents can never drift the well-observed parts of the scene.

The backend is anything satisfying `backends.InpaintBackend`; tests use
the identity and oracle mocks, deployments use the HTTP client.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .backends import IdentityBackend, InpaintBackend, RemoteBackend
from .cloud import GaussianCloud, init_cloud
from .errors import BackendError, DatasetError
from .metrics import psnr, ssim
from .render import render
from .scene import SceneDataset, SceneView, train_test_split
from .training import TrainConfig, train
from .visibility import AdjacencySpec, fuse_mask, uncertainty_map

MAX_INPAINT_WORKERS = 4


@dataclass
class PipelineConfig:
    """Knobs for one alternating run.

    `train` carries the per-cycle optimizer settings; its `iterations`
    field is the per-cycle budget (the initial fit uses it too).
    """

    cycles: int = 3
    theta_increment: float = 0.1
    noise_reduction: float = 0.2
    num_neighbors: int = 4
    depth_tolerance: float = 0.05
    backend: str = "mock"
    seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    # keep raw frames in every cycle's supervision; turning this off
    # trains later cycles on inpainted frames alone
    anchor_raw: bool = True
    # stop when cycle-over-cycle train PSNR moves less than this many dB
    # (None runs all K cycles)
    early_stop_delta: float | None = None
    # train fraction for held-out scoring (None trains on every view)
    holdout_ratio: float | None = None

    def validate(self) -> None:
        if self.cycles < 1:
            raise ValueError("cycles must be >= 1")
        if not 0.0 < self.noise_reduction < 1.0:
            raise ValueError("noise_reduction must be in (0, 1)")
        if self.theta_increment < 0.0:
            raise ValueError("theta_increment must be >= 0")
        top = (self.cycles - 1) * self.theta_increment
        if top > 1.0:
            raise ValueError(
                f"mask trust reaches {top:.2f} > 1 by the last cycle; "
                "lower cycles or theta_increment"
            )
        if self.num_neighbors < 2:
            raise ValueError("num_neighbors must be >= 2")
        if self.depth_tolerance <= 0.0:
            raise ValueError("depth_tolerance must be > 0")
        if self.holdout_ratio is not None and not 0.0 < self.holdout_ratio < 1.0:
            raise ValueError("holdout_ratio must be in (0, 1)")
        self.train.validate()


def theta_schedule(k: int, config: PipelineConfig) -> float:
    """Mask-region trust for cycle k (1-based): 0 on the first cycle,
    growing by the configured increment each cycle after."""
    if not 1 <= k <= config.cycles:
        raise ValueError(f"cycle {k} outside 1..{config.cycles}")
    return (k - 1) * config.theta_increment


def strength_schedule(k: int, config: PipelineConfig) -> float:
    """Diffusion noise strength for cycle k: starts at 1.0 and loses
    `noise_reduction` per cycle, floored at `noise_reduction` so the
    backend always has room to work."""
    if not 1 <= k <= config.cycles:
        raise ValueError(f"cycle {k} outside 1..{config.cycles}")
    return max(config.noise_reduction,
               1.0 - config.noise_reduction * (k - 1))


def resolve_backend(selector: str | InpaintBackend) -> InpaintBackend:
    """Map a config selector to a backend: 'mock' is the identity
    backend, an http(s) URL is the remote client, and an object is
    passed through (tests inject oracles this way)."""
    if not isinstance(selector, str):
        return selector
    if selector == "mock":
        return IdentityBackend()
    if selector.startswith("http://") or selector.startswith("https://"):
        return RemoteBackend(selector)
    raise ValueError(
        f"backend selector {selector!r}: expected 'mock' or an http(s) URL"
    )


@dataclass
class CycleState:
    """Everything one cycle produced. Artifact lists align with the
    training views, one entry per view."""

    index: int
    theta: float
    strength: float
    cloud: GaussianCloud
    uncertainty: list[np.ndarray]
    fused: list[np.ndarray]
    inpainted: list[np.ndarray]
    train_psnr: float
    holdout_psnr: float | None

    def validate(self, n_views: int) -> None:
        for name in ("uncertainty", "fused", "inpainted"):
            got = len(getattr(self, name))
            if got != n_views:
                raise ValueError(
                    f"cycle {self.index}: {got} {name} maps "
                    f"for {n_views} views"
                )


@dataclass
class PipelineReport:
    initial_train_psnr: float
    initial_holdout_psnr: float | None
    cycles: list[CycleState]
    # names of the views the cycle artifacts align with (the training
    # subset when a held-out split is active)
    view_names: list[str] = field(default_factory=list)
    stopped_early: bool = False

    @property
    def theta_log(self) -> list[float]:
        return [c.theta for c in self.cycles]

    @property
    def strength_log(self) -> list[float]:
        return [c.strength for c in self.cycles]


def _holdout_psnr(cloud: GaussianCloud, holdout: SceneDataset | None,
                  config: PipelineConfig) -> float | None:
    if holdout is None:
        return None
    bg = np.asarray(config.train.background, dtype=np.float64)
    scores = []
    for view in holdout.views:
        out = render(cloud, view.camera, background=bg)
        scores.append(psnr(view.image.astype(np.float64), out.color))
    return float(np.mean(scores))


def _inpaint_views(backend: InpaintBackend, dataset: SceneDataset,
                   fused: list[np.ndarray], strength: float,
                   seed: int, k: int) -> list[np.ndarray]:
    """Refill every raw view through the backend, a few views at a
    time. Failures surface as BackendError tagged with the cycle."""
    images = [v.image for v in dataset.views]
    try:
        handle = backend.learn_concept(images, fused)

        def one(i: int) -> np.ndarray:
            return np.asarray(backend.inpaint(
                images[i], fused[i], handle, strength, seed=seed + i,
            ), dtype=np.float64)

        with ThreadPoolExecutor(max_workers=MAX_INPAINT_WORKERS) as pool:
            return list(pool.map(one, range(len(images))))
    except BackendError as err:
        raise BackendError(f"inpainting failed in cycle {k}: {err}") from err


def run_refinement(
    dataset: SceneDataset,
    config: PipelineConfig,
    backend: InpaintBackend | None = None,
) -> tuple[GaussianCloud, PipelineReport]:
    """Run the full alternating loop on a dataset.

    Masks ride in on the dataset views (all-zero means nothing is
    user-excluded). Returns the final cloud plus a report carrying every
    cycle's cloud, maps, inpainted frames, and scores.
    """
    config.validate()
    if len(dataset.views) < 3:
        raise DatasetError(
            f"pipeline needs >= 3 views, got {len(dataset.views)}"
        )
    backend = backend if backend is not None else resolve_backend(config.backend)

    if config.holdout_ratio is not None:
        fit_set, holdout = train_test_split(
            dataset, ratio=config.holdout_ratio)
    else:
        fit_set, holdout = dataset, None
    views = fit_set.views
    n = len(views)

    cloud = init_cloud(fit_set.sfm_points, fit_set.sfm_colors)
    cfg0 = replace(config.train, seed=config.seed)
    cloud, log = train(cloud, fit_set, None, cfg0)
    report = PipelineReport(
        initial_train_psnr=log[-1].psnr,
        initial_holdout_psnr=_holdout_psnr(cloud, holdout, config),
        cycles=[],
        view_names=[v.name for v in views],
    )

    prev_psnr = report.initial_train_psnr
    inpainted: list[np.ndarray] | None = None
    for k in range(1, config.cycles + 1):
        theta = theta_schedule(k, config)
        strength = strength_schedule(k, config)

        uncertainty = [
            uncertainty_map(cloud, fit_set, i,
                            spec=AdjacencySpec(config.num_neighbors),
                            tau_d=config.depth_tolerance)
            for i in range(n)
        ]
        fused = [
            fuse_mask(uncertainty[i], views[i].mask, theta)
            for i in range(n)
        ]

        # Eq-style reweighted refit: raw frames count 1-M', inpainted
        # frames from the previous cycle count fully. Inpainted frames
        # reuse the raw cameras under fresh ids so the dataset's
        # unique-id invariant holds.
        sup_views = list(views)
        weights = [np.clip(1.0 - m, 0.0, 1.0) for m in fused]
        if inpainted is not None:
            id_gap = max(v.camera.cam_id for v in views) + 1
            ghosts = [
                SceneView(
                    camera=replace(v.camera, cam_id=v.camera.cam_id + id_gap),
                    image=o.astype(np.float32),
                    mask=v.mask, name=f"{v.name}@inpainted",
                )
                for v, o in zip(views, inpainted)
            ]
            ones = [np.ones(v.image.shape[:2]) for v in views]
            if config.anchor_raw:
                sup_views = sup_views + ghosts
                weights = weights + ones
            else:
                sup_views = ghosts
                weights = ones
        sup_set = SceneDataset(
            views=sup_views, sfm_points=fit_set.sfm_points,
            sfm_colors=fit_set.sfm_colors, name=f"{dataset.name}-cycle{k}",
        )
        cfg_k = replace(config.train, seed=config.seed + k)
        cloud, log = train(cloud, sup_set, weights, cfg_k)

        inpainted = _inpaint_views(
            backend, fit_set, fused, strength, config.seed, k)

        state = CycleState(
            index=k, theta=theta, strength=strength, cloud=cloud,
            uncertainty=uncertainty, fused=fused, inpainted=inpainted,
            train_psnr=log[-1].psnr,
            holdout_psnr=_holdout_psnr(cloud, holdout, config),
        )
        state.validate(n)
        report.cycles.append(state)

        if (config.early_stop_delta is not None
                and abs(state.train_psnr - prev_psnr) < config.early_stop_delta):
            report.stopped_early = True
            break
        prev_psnr = state.train_psnr

    return cloud, report


def viewpoint_sparsity_study(
    dataset: SceneDataset,
    intervals: list[int],
    config: PipelineConfig,
    backend: InpaintBackend | None = None,
) -> list[tuple[int, float, float]]:
    """Measure how view sparsity degrades the reconstruction.

    For each interval s, run the pipeline on every s-th view and score
    its renders at all of the original cameras against renders of a
    reference model built from the full view set. Returns (interval,
    PSNR, SSIM) rows in the order given.
    """
    for s in intervals:
        if s < 1:
            raise ValueError(f"interval must be >= 1, got {s}")
        kept = len(range(0, len(dataset.views), s))
        if kept < 3:
            raise ValueError(
                f"interval {s} leaves {kept} views; need >= 3"
            )

    reference, _ = run_refinement(dataset, config, backend=backend)
    bg = np.asarray(config.train.background, dtype=np.float64)
    ref_renders = [
        render(reference, v.camera, background=bg).color
        for v in dataset.views
    ]

    rows = []
    for s in intervals:
        sub = SceneDataset(
            views=dataset.views[::s],
            sfm_points=dataset.sfm_points,
            sfm_colors=dataset.sfm_colors,
            name=f"{dataset.name}-every{s}",
        )
        cloud, _ = run_refinement(sub, config, backend=backend)
        p_scores, s_scores = [], []
        for view, ref_img in zip(dataset.views, ref_renders):
            img = render(cloud, view.camera, background=bg).color
            p_scores.append(psnr(ref_img, img))
            s_scores.append(ssim(ref_img, img))
        rows.append((s, float(np.mean(p_scores)), float(np.mean(s_scores))))
    return rows

