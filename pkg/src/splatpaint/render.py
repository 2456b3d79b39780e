"""Forward splat rendering: EWA projection to 2D Gaussians and front-to-back
alpha compositing.

Two implementations share the projection math but rasterize independently:

* ``render`` restricts each splat to a conservative screen-space bounding box
  (``extent_sigma`` marginal standard deviations, default 7, tail < 1e-9) and
  composites through flat pair arrays with segmented scans. The box radius is
  an internal performance detail; correctness is pinned by agreement with the
  naive path at 1e-6.
* ``render_naive`` evaluates every splat at every pixel with no bounding box
  or other geometric shortcut, compositing via a dense transmittance
  cumulative product.

Both stop compositing a pixel once its transmittance drops below ``stop_t``
(checked before each splat is composited), which is part of the shared
compositing contract.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import sh as shlib
from .cloud import GaussianCloud
from .geometry import CameraView, normalize_quat, quat_to_rotmat

NEAR_PLANE = 0.01
BLUR_FLOOR = 0.3  # px^2 added to the 2D covariance diagonal
STOP_T = 1e-4
EXTENT_SIGMA = 7.0
# 99% mass radius of a 2D Gaussian: chi2.ppf(0.99, df=2) = -2 ln(0.01)
R99_SQ = -2.0 * np.log(0.01)
_ALPHA_CEIL = 1.0 - 1e-15  # keeps log1p(-alpha) finite


@dataclass
class RenderOutput:
    color: np.ndarray  # (H, W, 3)
    depth: np.ndarray  # (H, W) alpha-normalized expected depth, 0 where alpha=0
    alpha: np.ndarray  # (H, W) accumulated opacity


@dataclass
class ProjectedSplat:
    mean2d: np.ndarray  # (2,) pixel coordinates (u, v)
    cov2d: np.ndarray  # (2, 2) screen-space covariance incl. blur floor
    depth: float
    culled: bool


@dataclass
class ProjectionCache:
    """Per-splat projection intermediates, retained for the backward pass."""

    camera: CameraView
    dtype: np.dtype
    n_total: int
    valid: np.ndarray  # (N,) bool, depth > NEAR_PLANE
    mean_cam: np.ndarray  # (N, 3)
    mean2d: np.ndarray  # (N, 2)
    J: np.ndarray  # (N, 2, 3) perspective Jacobian
    M: np.ndarray  # (N, 2, 3) J @ R
    R_q: np.ndarray  # (N, 3, 3) splat rotations
    q_hat: np.ndarray  # (N, 4) normalized quaternions
    q_norm: np.ndarray  # (N,) original quaternion norms
    D: np.ndarray  # (N, 3) exp(2 * log_scales)
    Sigma: np.ndarray  # (N, 3, 3)
    cov2d: np.ndarray  # (N, 3) packed (C00, C01, C11)
    conic: np.ndarray  # (N, 3) packed inverse (A00, A01, A11)
    alpha: np.ndarray  # (N,) sigmoid opacity
    color: np.ndarray  # (N, 3) clamped SH color
    color_active: np.ndarray  # (N, 3) bool, inside the [0, 1] clamp
    dirs: np.ndarray  # (N, 3) unit view directions
    dir_len: np.ndarray  # (N,) distance camera center to splat
    basis: np.ndarray  # (N, K) SH basis values


@dataclass
class RenderCache:
    """Everything the analytic backward pass needs from one forward render."""

    proj: ProjectionCache
    background: np.ndarray
    retained: np.ndarray  # (M,) original splat indices, depth-sorted
    pair_splat: np.ndarray  # (P,) index into `retained`
    pair_pixel: np.ndarray  # (P,) flat pixel index, segment-sorted
    pair_dx: np.ndarray  # (P,)
    pair_dy: np.ndarray  # (P,)
    pair_G: np.ndarray  # (P,) Gaussian weight
    pair_T: np.ndarray  # (P,) transmittance before the pair
    pair_keep: np.ndarray  # (P,) bool, False once stop_t was crossed
    seg_first: np.ndarray  # (P,) bool, pair starts a new pixel segment
    t_final: np.ndarray  # (H*W,) transmittance after compositing
    out: RenderOutput


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def project_cloud(cloud: GaussianCloud, camera: CameraView, dtype=np.float64) -> ProjectionCache:
    """Project all splats into a camera: screen means, 2D covariances, view
    depths, opacities, and view-dependent colors."""
    dtype = np.dtype(dtype)
    means = cloud.means.astype(dtype, copy=False)
    n = means.shape[0]
    R = camera.R.astype(dtype)
    t = camera.tvec.astype(dtype)
    fx, fy = dtype.type(camera.fx), dtype.type(camera.fy)

    mean_cam = means @ R.T + t
    x, y, z = mean_cam[:, 0], mean_cam[:, 1], mean_cam[:, 2]
    valid = z > NEAR_PLANE
    zs = np.where(np.abs(z) > 1e-12, z, 1.0)  # guard exact zeros only

    mean2d = np.empty((n, 2), dtype=dtype)
    mean2d[:, 0] = fx * x / zs + camera.cx
    mean2d[:, 1] = fy * y / zs + camera.cy

    J = np.zeros((n, 2, 3), dtype=dtype)
    J[:, 0, 0] = fx / zs
    J[:, 0, 2] = -fx * x / (zs * zs)
    J[:, 1, 1] = fy / zs
    J[:, 1, 2] = -fy * y / (zs * zs)
    M = J @ R  # (N, 2, 3)

    q_norm = np.linalg.norm(cloud.quats, axis=1)
    q_hat = (cloud.quats / q_norm[:, None]).astype(dtype)
    R_q = quat_to_rotmat(q_hat)
    D = np.exp(2.0 * cloud.log_scales.astype(dtype))
    Sigma = (R_q * D[:, None, :]) @ R_q.transpose(0, 2, 1)

    cov_full = M @ Sigma @ M.transpose(0, 2, 1)
    c00 = cov_full[:, 0, 0] + BLUR_FLOOR
    c01 = cov_full[:, 0, 1]
    c11 = cov_full[:, 1, 1] + BLUR_FLOOR
    det = c00 * c11 - c01 * c01
    conic = np.stack([c11 / det, -c01 / det, c00 / det], axis=1)

    center = camera.center.astype(dtype)
    diff = means - center
    dir_len = np.linalg.norm(diff, axis=1)
    dir_len = np.maximum(dir_len, 1e-12)
    dirs = diff / dir_len[:, None]
    basis = shlib.sh_basis(dirs, cloud.sh_degree)
    raw = np.einsum("nk,nkc->nc", basis, cloud.sh.astype(dtype)) + shlib.COLOR_OFFSET
    color = np.clip(raw, 0.0, 1.0)
    color_active = (raw > 0.0) & (raw < 1.0)

    return ProjectionCache(
        camera=camera, dtype=dtype, n_total=n, valid=valid,
        mean_cam=mean_cam, mean2d=mean2d, J=J, M=M,
        R_q=R_q, q_hat=q_hat, q_norm=q_norm, D=D, Sigma=Sigma,
        cov2d=np.stack([c00, c01, c11], axis=1), conic=conic,
        alpha=_sigmoid(cloud.opacities.astype(dtype)),
        color=color, color_active=color_active,
        dirs=dirs, dir_len=dir_len, basis=basis,
    )


def project_splat(cloud: GaussianCloud, index: int, camera: CameraView) -> ProjectedSplat:
    """Project a single splat. ``culled`` is set when the view depth is at or
    below the near plane or the 99% ellipse misses the frame entirely."""
    proj = project_cloud(cloud, camera)
    mean2d = proj.mean2d[index]
    c00, c01, c11 = proj.cov2d[index]
    depth = float(proj.mean_cam[index, 2])
    culled = depth <= NEAR_PLANE
    if not culled:
        ext_u = np.sqrt(R99_SQ * c00)
        ext_v = np.sqrt(R99_SQ * c11)
        off_frame = (
            mean2d[0] + ext_u < -0.5 or mean2d[0] - ext_u > camera.width - 0.5
            or mean2d[1] + ext_v < -0.5 or mean2d[1] - ext_v > camera.height - 0.5
        )
        culled = bool(off_frame)
    return ProjectedSplat(
        mean2d=mean2d.copy(),
        cov2d=np.array([[c00, c01], [c01, c11]]),
        depth=depth,
        culled=culled,
    )


def _depth_order(proj: ProjectionCache) -> np.ndarray:
    """Indices of valid splats sorted by (view depth, splat id)."""
    idx = np.nonzero(proj.valid)[0]
    depth = proj.mean_cam[idx, 2]
    order = np.lexsort((idx, depth))
    return idx[order]


def _build_pairs(
    proj: ProjectionCache, retained: np.ndarray, extent_sigma: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Expand depth-sorted splats into flat (splat, pixel) pair arrays sorted
    by pixel (stable, so depth order survives within each pixel).

    Returns (pair_splat, pair_px, pair_py, keep_splats) where keep_splats
    filters `retained` down to splats with a non-empty on-frame box.
    """
    cam = proj.camera
    u = proj.mean2d[retained, 0]
    v = proj.mean2d[retained, 1]
    ext_u = extent_sigma * np.sqrt(proj.cov2d[retained, 0])
    ext_v = extent_sigma * np.sqrt(proj.cov2d[retained, 2])

    x0 = np.maximum(np.ceil(u - ext_u), 0).astype(np.int64)
    x1 = np.minimum(np.floor(u + ext_u), cam.width - 1).astype(np.int64)
    y0 = np.maximum(np.ceil(v - ext_v), 0).astype(np.int64)
    y1 = np.minimum(np.floor(v + ext_v), cam.height - 1).astype(np.int64)

    widths = x1 - x0 + 1
    heights = y1 - y0 + 1
    nonempty = (widths > 0) & (heights > 0)
    x0, y0 = x0[nonempty], y0[nonempty]
    widths, heights = widths[nonempty], heights[nonempty]
    counts = widths * heights
    total = int(counts.sum())
    if total == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty, nonempty

    pair_splat = np.repeat(np.arange(counts.shape[0], dtype=np.int64), counts)
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
    local = np.arange(total, dtype=np.int64) - offsets[pair_splat]
    w_s = widths[pair_splat]
    pair_px = x0[pair_splat] + local % w_s
    pair_py = y0[pair_splat] + local // w_s
    return pair_splat, pair_px, pair_py, nonempty


def _segment_exclusive_cumsum(values: np.ndarray, seg_first: np.ndarray) -> np.ndarray:
    """Exclusive cumulative sum restarting at every segment start."""
    incl = np.cumsum(values)
    base = incl - values
    starts = np.nonzero(seg_first)[0]
    seg_id = np.cumsum(seg_first) - 1
    return base - base[starts][seg_id]


def render(
    cloud: GaussianCloud,
    camera: CameraView,
    background: np.ndarray | None = None,
    *,
    extent_sigma: float = EXTENT_SIGMA,
    stop_t: float = STOP_T,
    dtype=np.float64,
    with_cache: bool = False,
):
    """Render a cloud into a camera.

    Splats are depth-sorted globally (ties broken by splat id), composited
    front to back per pixel as color += c_i * a_i * T with
    T *= (1 - a_i), stopping once T < stop_t. Depth output is the
    alpha-normalized expected view depth (0 where alpha is 0). Deterministic:
    identical inputs produce identical outputs.

    With ``with_cache=True`` returns (RenderOutput, RenderCache) for the
    analytic backward pass.
    """
    dtype = np.dtype(dtype)
    cam = camera
    hw = cam.height * cam.width
    if background is None:
        background = np.zeros(3, dtype=dtype)
    background = np.asarray(background, dtype=dtype)
    if background.shape != (3,) or background.min() < 0 or background.max() > 1:
        raise ValueError("background must be an RGB triple in [0, 1]")

    proj = project_cloud(cloud, camera, dtype)
    retained = _depth_order(proj)
    pair_splat_r, px, py, nonempty = _build_pairs(proj, retained, extent_sigma)
    retained = retained[nonempty]

    if pair_splat_r.shape[0] == 0:
        color = np.tile(background, (cam.height, cam.width, 1)).astype(dtype)
        out = RenderOutput(
            color=color,
            depth=np.zeros((cam.height, cam.width), dtype=dtype),
            alpha=np.zeros((cam.height, cam.width), dtype=dtype),
        )
        if with_cache:
            cache = RenderCache(
                proj=proj, background=background, retained=retained,
                pair_splat=pair_splat_r, pair_pixel=pair_splat_r,
                pair_dx=np.zeros(0, dtype), pair_dy=np.zeros(0, dtype),
                pair_G=np.zeros(0, dtype), pair_T=np.zeros(0, dtype),
                pair_keep=np.zeros(0, bool), seg_first=np.zeros(0, bool),
                t_final=np.ones(hw, dtype=dtype), out=out,
            )
            return out, cache
        return out

    pixel = (py * cam.width + px).astype(np.int32)
    order = np.argsort(pixel, kind="stable")
    pair_splat = pair_splat_r[order]
    pixel = pixel[order]
    px = px[order]
    py = py[order]

    orig = retained[pair_splat]
    dx = px.astype(dtype) - proj.mean2d[orig, 0]
    dy = py.astype(dtype) - proj.mean2d[orig, 1]
    a00, a01, a11 = proj.conic[orig, 0], proj.conic[orig, 1], proj.conic[orig, 2]
    qform = a00 * dx * dx + 2.0 * a01 * dx * dy + a11 * dy * dy
    G = np.exp(-0.5 * qform)
    a_pair = np.minimum(proj.alpha[orig] * G, _ALPHA_CEIL)

    seg_first = np.empty(pixel.shape[0], dtype=bool)
    seg_first[0] = True
    seg_first[1:] = pixel[1:] != pixel[:-1]

    log_one_minus = np.log1p(-a_pair)
    log_t = _segment_exclusive_cumsum(log_one_minus, seg_first)
    log_stop = np.log(stop_t) if stop_t > 0.0 else -np.inf
    keep = log_t >= log_stop
    T = np.exp(log_t)
    w = np.where(keep, a_pair * T, 0.0)

    log_t_final = np.bincount(pixel, weights=np.where(keep, log_one_minus, 0.0), minlength=hw)
    t_final = np.exp(log_t_final.astype(dtype))

    color_flat = np.empty((hw, 3), dtype=dtype)
    for ch in range(3):
        color_flat[:, ch] = np.bincount(
            pixel, weights=w * proj.color[orig, ch], minlength=hw
        )
    color_flat += background[None, :] * t_final[:, None]
    np.clip(color_flat, 0.0, 1.0, out=color_flat)

    alpha_flat = 1.0 - t_final
    depth_acc = np.bincount(pixel, weights=w * proj.mean_cam[orig, 2], minlength=hw)
    depth_flat = depth_acc / np.maximum(alpha_flat, 1e-6)

    out = RenderOutput(
        color=color_flat.reshape(cam.height, cam.width, 3),
        depth=depth_flat.reshape(cam.height, cam.width).astype(dtype),
        alpha=alpha_flat.reshape(cam.height, cam.width).astype(dtype),
    )
    if not with_cache:
        return out
    cache = RenderCache(
        proj=proj, background=background, retained=retained,
        pair_splat=pair_splat, pair_pixel=pixel,
        pair_dx=dx, pair_dy=dy, pair_G=G, pair_T=T,
        pair_keep=keep, seg_first=seg_first, t_final=t_final, out=out,
    )
    return out, cache


def render_naive(
    cloud: GaussianCloud,
    camera: CameraView,
    background: np.ndarray | None = None,
    *,
    stop_t: float = STOP_T,
    dtype=np.float64,
    transmittance_trace: bool = False,
):
    """Reference rasterizer: identical compositing contract to ``render`` but
    every splat is evaluated at every pixel, with no bounding boxes and no
    other geometric shortcut. Used as the oracle for the tiled path.

    With ``transmittance_trace=True`` additionally returns the (S, H*W)
    per-splat transmittance sequence (before each splat, in depth order).
    """
    dtype = np.dtype(dtype)
    cam = camera
    hw = cam.height * cam.width
    if background is None:
        background = np.zeros(3, dtype=dtype)
    background = np.asarray(background, dtype=dtype)

    proj = project_cloud(cloud, camera, dtype)
    retained = _depth_order(proj)
    s = retained.shape[0]

    vs, us = np.divmod(np.arange(hw), cam.width)
    if s == 0:
        out = RenderOutput(
            color=np.tile(background, (cam.height, cam.width, 1)).astype(dtype),
            depth=np.zeros((cam.height, cam.width), dtype=dtype),
            alpha=np.zeros((cam.height, cam.width), dtype=dtype),
        )
        return (out, np.ones((0, hw), dtype=dtype)) if transmittance_trace else out

    dx = us[None, :].astype(dtype) - proj.mean2d[retained, 0][:, None]  # (S, HW)
    dy = vs[None, :].astype(dtype) - proj.mean2d[retained, 1][:, None]
    a00 = proj.conic[retained, 0][:, None]
    a01 = proj.conic[retained, 1][:, None]
    a11 = proj.conic[retained, 2][:, None]
    G = np.exp(-0.5 * (a00 * dx * dx + 2.0 * a01 * dx * dy + a11 * dy * dy))
    a = np.minimum(proj.alpha[retained][:, None] * G, _ALPHA_CEIL)

    t_incl = np.cumprod(1.0 - a, axis=0)
    t_excl = np.vstack([np.ones((1, hw), dtype=dtype), t_incl[:-1]])
    keep = t_excl >= stop_t
    w = np.where(keep, a * t_excl, 0.0)

    kept_counts = keep.sum(axis=0)
    t_final = np.where(
        kept_counts > 0,
        np.take_along_axis(
            np.vstack([np.ones((1, hw), dtype=dtype), t_incl]),
            kept_counts[None, :], axis=0,
        )[0],
        1.0,
    )

    color_flat = w.T @ proj.color[retained] + background[None, :] * t_final[:, None]
    np.clip(color_flat, 0.0, 1.0, out=color_flat)
    alpha_flat = 1.0 - t_final
    depth_flat = (w * proj.mean_cam[retained, 2][:, None]).sum(axis=0)
    depth_flat = depth_flat / np.maximum(alpha_flat, 1e-6)

    out = RenderOutput(
        color=color_flat.reshape(cam.height, cam.width, 3),
        depth=depth_flat.reshape(cam.height, cam.width),
        alpha=alpha_flat.reshape(cam.height, cam.width),
    )
    return (out, t_excl) if transmittance_trace else out


def sample_bilinear(image: np.ndarray, uv: np.ndarray) -> np.ndarray:
    """Bilinearly sample an image at continuous pixel coordinates.

    Parameters
    ----------
    image : (H, W, C) or (H, W) array.
    uv : (..., 2) coordinates (u = column, v = row); pixel centers sit at
        integer coordinates. Coordinates are clamped to the frame edge, so
        querying outside returns edge values (callers wanting to reject
        out-of-frame samples must test bounds themselves).

    Returns
    -------
    (..., C) or (...,) sampled values.
    """
    squeeze = image.ndim == 2
    img = image[:, :, None] if squeeze else image
    h, w = img.shape[:2]
    uv = np.asarray(uv, dtype=np.float64)
    u = np.clip(uv[..., 0], 0.0, w - 1.0)
    v = np.clip(uv[..., 1], 0.0, h - 1.0)
    u0 = np.floor(u).astype(np.int64)
    v0 = np.floor(v).astype(np.int64)
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    fu = (u - u0)[..., None]
    fv = (v - v0)[..., None]
    top = img[v0, u0] * (1 - fu) + img[v0, u1] * fu
    bot = img[v1, u0] * (1 - fu) + img[v1, u1] * fu
    res = top * (1 - fv) + bot * fv
    return res[..., 0] if squeeze else res
