"""Optimization of a GaussianCloud against posed images.

The loop is the usual one: sample a view, render, backpropagate the
weighted photometric loss, take an Adam step, and periodically
densify/prune. Learning rates follow the reference splatting defaults;
the position rate is scaled by the scene extent and decayed
exponentially over the run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import GaussianCloud
from .geometry import CameraView, normalize_quat
from .grad import GradientSet, backward_render
from .losses import (
    DEFAULT_DSSIM_WEIGHT,
    DEFAULT_L1_WEIGHT,
    loss_weighted_grad,
)
from .render import EXTENT_SIGMA, STOP_T, RenderOutput, render
from .scene import SceneDataset

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-15

_PARAM_FIELDS = ("means", "log_scales", "quats", "opacities", "sh")


@dataclass
class TrainConfig:
    iterations: int = 4000
    # means rate is multiplied by the scene extent and decayed to the
    # final value over the full run
    lr_means: float = 1.6e-4
    lr_means_final: float = 1.6e-6
    lr_scales: float = 5e-3
    lr_quats: float = 1e-3
    lr_opacities: float = 5e-2
    lr_sh: float = 2.5e-3
    sh_rest_lr_div: float = 20.0
    l1_weight: float = DEFAULT_L1_WEIGHT
    dssim_weight: float = DEFAULT_DSSIM_WEIGHT
    densify_from: int = 500
    densify_until_frac: float = 0.5
    densify_interval: int = 100
    # threshold on the mean per-iteration positional gradient, measured
    # in half-image units so it is resolution independent
    densify_grad_threshold: float = 2e-4
    densify_size_frac: float = 0.01
    prune_opacity: float = 0.005
    max_splats: int = 200_000
    extent_sigma: float = 4.0
    stop_t: float = STOP_T
    dtype: str = "float32"
    seed: int = 0
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def validate(self) -> None:
        if self.iterations <= 0:
            raise ValueError("iterations must be > 0")
        for name in ("densify_grad_threshold", "densify_interval",
                     "prune_opacity", "densify_size_frac"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if not 0.0 <= self.densify_until_frac <= 1.0:
            raise ValueError("densify_until_frac must be in [0, 1]")


@dataclass
class LearningRates:
    means: float
    log_scales: float
    quats: float
    opacities: float
    sh: np.ndarray  # (K, 1) per-coefficient, broadcast over channels


@dataclass
class AdamState:
    step: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]

    @classmethod
    def init(cls, cloud: GaussianCloud) -> "AdamState":
        m = {}
        v = {}
        for name in _PARAM_FIELDS:
            arr = getattr(cloud, name)
            m[name] = np.zeros_like(arr)
            v[name] = np.zeros_like(arr)
        return cls(step=0, m=m, v=v)

    def remap(self, keep: np.ndarray, n_new: int) -> "AdamState":
        """Keep moment rows for surviving splats, zero rows for new ones."""
        m = {}
        v = {}
        for name in _PARAM_FIELDS:
            old_m, old_v = self.m[name], self.v[name]
            shape = (keep.sum() + n_new,) + old_m.shape[1:]
            nm = np.zeros(shape, dtype=old_m.dtype)
            nv = np.zeros(shape, dtype=old_v.dtype)
            nm[: keep.sum()] = old_m[keep]
            nv[: keep.sum()] = old_v[keep]
            m[name], v[name] = nm, nv
        return AdamState(step=self.step, m=m, v=v)


def sh_rates(base: float, rest_div: float, num_coeffs: int) -> np.ndarray:
    rates = np.full((num_coeffs, 1), base / rest_div)
    rates[0, 0] = base
    return rates


def adam_step(
    cloud: GaussianCloud,
    grads: GradientSet,
    state: AdamState,
    rates: LearningRates,
) -> None:
    """One bias-corrected Adam update, in place; quaternions renormalized."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - ADAM_BETA1 ** t
    bc2 = 1.0 - ADAM_BETA2 ** t
    for name in _PARAM_FIELDS:
        g = getattr(grads, name)
        m = state.m[name]
        v = state.v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        lr = getattr(rates, name)
        param = getattr(cloud, name)
        param -= lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
    cloud.quats[:] = normalize_quat(cloud.quats)


def backward(
    cloud: GaussianCloud,
    camera: CameraView,
    image: np.ndarray,
    weights: np.ndarray,
    l1_weight: float = DEFAULT_L1_WEIGHT,
    dssim_weight: float = DEFAULT_DSSIM_WEIGHT,
    *,
    background: np.ndarray | None = None,
    extent_sigma: float = EXTENT_SIGMA,
    stop_t: float = STOP_T,
    dtype=np.float64,
) -> tuple[float, GradientSet]:
    """Loss and analytic parameter gradients for one view."""
    loss, grads, _ = _loss_backward(
        cloud, camera, image, weights, l1_weight, dssim_weight,
        background=background, extent_sigma=extent_sigma,
        stop_t=stop_t, dtype=dtype,
    )
    return loss, grads


def _loss_backward(
    cloud: GaussianCloud,
    camera: CameraView,
    image: np.ndarray,
    weights: np.ndarray,
    l1_weight: float,
    dssim_weight: float,
    *,
    background: np.ndarray | None,
    extent_sigma: float,
    stop_t: float,
    dtype,
) -> tuple[float, GradientSet, RenderOutput]:
    out, cache = render(
        cloud, camera, background,
        extent_sigma=extent_sigma, stop_t=stop_t, dtype=dtype,
        with_cache=True,
    )
    loss, d_img = loss_weighted_grad(
        image, out.color, weights, l1_weight, dssim_weight
    )
    grads = backward_render(cloud, cache, d_img.astype(np.dtype(dtype)))
    grads.check_finite()
    return loss, grads, out


def scene_extent(dataset: SceneDataset) -> float:
    centers = dataset.camera_centers()
    spread = np.linalg.norm(centers - centers.mean(axis=0), axis=1).max()
    return float(max(1.1 * spread, 1e-3))


def _lr_decay(lr0: float, lr1: float, frac: float) -> float:
    return float(lr0 * (lr1 / lr0) ** frac)


def _sample_in_ellipsoid(
    cloud: GaussianCloud, idx: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Draw one point per selected splat from its own Gaussian."""
    from .geometry import quat_to_rotmat

    n = idx.shape[0]
    eps = rng.standard_normal((n, 3)).astype(cloud.means.dtype)
    R = quat_to_rotmat(normalize_quat(cloud.quats[idx]))
    local = eps * np.exp(cloud.log_scales[idx])
    return cloud.means[idx] + np.einsum("nij,nj->ni", R, local)


def densify_prune(
    cloud: GaussianCloud,
    state: AdamState,
    mean_grad: np.ndarray,
    config: TrainConfig,
    extent: float,
    rng: np.random.Generator,
) -> tuple[GaussianCloud, AdamState]:
    """Clone small / split large splats above the gradient threshold,
    then drop near-transparent ones. Optimizer moments follow the rows:
    survivors keep theirs, new splats start at zero."""
    n = len(cloud)
    over = mean_grad > config.densify_grad_threshold
    max_scale = np.exp(cloud.log_scales).max(axis=1)
    big = max_scale > config.densify_size_frac * extent

    clone_idx = np.nonzero(over & ~big)[0]
    split_idx = np.nonzero(over & big)[0]
    if n + clone_idx.size + split_idx.size > config.max_splats:
        clone_idx = clone_idx[:0]
        split_idx = split_idx[:0]

    keep = np.ones(n, dtype=bool)
    keep[split_idx] = False  # parents replaced by their two children
    keep &= cloud.alphas() >= config.prune_opacity

    parts = {name: [getattr(cloud, name)[keep]] for name in _PARAM_FIELDS}
    n_new = 0

    if clone_idx.size:
        for name in _PARAM_FIELDS:
            parts[name].append(getattr(cloud, name)[clone_idx].copy())
        n_new += clone_idx.size

    if split_idx.size:
        shrink = np.log(1.6)
        for _ in range(2):
            child_means = _sample_in_ellipsoid(cloud, split_idx, rng)
            parts["means"].append(child_means)
            parts["log_scales"].append(cloud.log_scales[split_idx] - shrink)
            parts["quats"].append(cloud.quats[split_idx].copy())
            parts["opacities"].append(cloud.opacities[split_idx].copy())
            parts["sh"].append(cloud.sh[split_idx].copy())
        n_new += 2 * split_idx.size

    new_cloud = GaussianCloud(
        means=np.concatenate(parts["means"]),
        log_scales=np.concatenate(parts["log_scales"]),
        quats=np.concatenate(parts["quats"]),
        opacities=np.concatenate(parts["opacities"]),
        sh=np.concatenate(parts["sh"]),
    )
    return new_cloud, state.remap(keep, n_new)


@dataclass
class TrainLogEntry:
    iteration: int
    loss: float
    psnr: float
    num_splats: int


def _weighted_psnr(image: np.ndarray, rendered: np.ndarray,
                   weights: np.ndarray) -> float:
    wsum = weights.sum()
    mse = float(
        (weights[:, :, None] * (image - rendered) ** 2).sum() / (3.0 * wsum)
    )
    if mse <= 0.0:
        return 99.0
    return min(float(-10.0 * np.log10(mse)), 99.0)


def train(
    cloud: GaussianCloud,
    dataset: SceneDataset,
    weight_maps: list[np.ndarray] | None,
    config: TrainConfig,
) -> tuple[GaussianCloud, list[TrainLogEntry]]:
    """Fit the cloud to the dataset views. Returns the trained cloud and a
    per-iteration log of (iteration, loss, weighted train-view PSNR, size).

    ``weight_maps`` aligns with ``dataset.views``; None means all-ones
    (plain photometric supervision everywhere).
    """
    config.validate()
    dtype = np.dtype(config.dtype)
    views = dataset.views
    if weight_maps is None:
        weight_maps = [
            np.ones(v.image.shape[:2], dtype=dtype) for v in views
        ]
    if len(weight_maps) != len(views):
        raise ValueError(
            f"{len(weight_maps)} weight maps for {len(views)} views"
        )
    for v, w in zip(views, weight_maps):
        if w.shape != v.image.shape[:2]:
            raise ValueError(f"weight map shape mismatch on view '{v.name}'")
        if w.sum() <= 0.0:
            raise ValueError(f"all-zero weight map on view '{v.name}'")

    images = [v.image.astype(dtype) for v in views]
    weight_maps = [w.astype(dtype) for w in weight_maps]
    background = np.asarray(config.background, dtype=dtype)

    cloud = cloud.astype(dtype)
    state = AdamState.init(cloud)
    extent = scene_extent(dataset)
    rng = np.random.default_rng(config.seed)

    grad_accum = np.zeros(len(cloud), dtype=np.float64)
    grad_count = np.zeros(len(cloud), dtype=np.int64)
    densify_until = int(config.densify_until_frac * config.iterations)
    k_sh = cloud.sh.shape[1]
    sh_lr = sh_rates(config.lr_sh, config.sh_rest_lr_div, k_sh)

    log: list[TrainLogEntry] = []
    order = np.array([], dtype=np.int64)

    for it in range(1, config.iterations + 1):
        if order.size == 0:
            order = rng.permutation(len(views))
        vi = int(order[-1])
        order = order[:-1]

        loss, grads, out = _loss_backward(
            cloud, views[vi].camera, images[vi], weight_maps[vi],
            config.l1_weight, config.dssim_weight,
            background=background, extent_sigma=config.extent_sigma,
            stop_t=config.stop_t, dtype=dtype,
        )

        # densification signal: positional gradient in half-image units
        half = 0.5 * max(views[vi].camera.width, views[vi].camera.height)
        grad_accum[grads.visible] += (
            grads.screen_grad_norm[grads.visible] * half
        )
        grad_count[grads.visible] += 1

        frac = (it - 1) / max(config.iterations - 1, 1)
        rates = LearningRates(
            means=_lr_decay(config.lr_means * extent,
                            config.lr_means_final * extent, frac),
            log_scales=config.lr_scales,
            quats=config.lr_quats,
            opacities=config.lr_opacities,
            sh=sh_lr,
        )
        adam_step(cloud, grads, state, rates)

        log.append(TrainLogEntry(
            iteration=it,
            loss=loss,
            psnr=_weighted_psnr(images[vi], out.color, weight_maps[vi]),
            num_splats=len(cloud),
        ))

        if (config.densify_from <= it <= densify_until
                and it % config.densify_interval == 0):
            mean_grad = grad_accum / np.maximum(grad_count, 1)
            cloud, state = densify_prune(
                cloud, state, mean_grad, config, extent, rng
            )
            grad_accum = np.zeros(len(cloud), dtype=np.float64)
            grad_count = np.zeros(len(cloud), dtype=np.int64)

    return cloud, log
