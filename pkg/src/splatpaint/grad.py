"""Analytic backward pass through the splat renderer.

Given the forward cache of `render` and the loss gradient with respect to the
rendered color image, produces per-splat partial derivatives for every
optimizable field. Derivation notes:

* Compositing: C = sum_k w_k c_k + bg * T_fin with w_k = g_k T_k,
  T_k = prod_{j<k}(1 - g_j) over the kept prefix of each pixel. For a kept
  pair i, dC/dg_i = T_i c_i - S_i / (1 - g_i) where S_i collects every later
  kept contribution of the pixel plus the background term.
* Gaussian weight: G = exp(-q/2), q = d^T A d, so dG/d(mean2d) = G (A d) and
  dG/dA = -G/2 d d^T with A the conic (inverse 2D covariance).
* Matrix chains: A = C^-1 gives dL/dC = -A (dL/dA) A; C = M Sigma M^T maps
  to dL/dSigma = M^T (dL/dC) M and dL/dM = 2 (dL/dC) M Sigma; Sigma =
  R diag(D) R^T maps to dL/dD = diag(R^T dL/dSigma R) and
  dL/dR = 2 (dL/dSigma) R diag(D).
* View-direction dependence of SH colors contributes to the mean gradient
  through d(dir)/d(mean) = (I - dir dir^T) / |mean - center|.

Splats culled in the forward pass (near plane or off frame) receive exactly
zero gradients. Non-finite gradients raise, naming the splat.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import sh as shlib
from .cloud import GaussianCloud
from .geometry import quat_rotmat_jacobian
from .render import RenderCache


@dataclass
class GradientSet:
    """Per-splat loss partials plus densification bookkeeping."""

    means: np.ndarray  # (N, 3)
    log_scales: np.ndarray  # (N, 3)
    quats: np.ndarray  # (N, 4)
    opacities: np.ndarray  # (N,)
    sh: np.ndarray  # (N, K, 3)
    screen_grad_norm: np.ndarray  # (N,) |dL/d mean2d|, densification signal
    visible: np.ndarray  # (N,) bool, splat contributed pairs this render

    def check_finite(self) -> None:
        for name in ("means", "log_scales", "quats", "opacities", "sh"):
            arr = getattr(self, name)
            bad = ~np.isfinite(arr)
            if bad.any():
                splat = int(np.argwhere(bad)[0][0])
                raise FloatingPointError(
                    f"non-finite gradient in '{name}' for splat {splat}"
                )


def _segment_inclusive_cumsum(values: np.ndarray, seg_first: np.ndarray) -> np.ndarray:
    incl = np.cumsum(values)
    starts = np.nonzero(seg_first)[0]
    seg_id = np.cumsum(seg_first) - 1
    base = incl - values
    return incl - base[starts][seg_id]


def backward_render(
    cloud: GaussianCloud, cache: RenderCache, d_color: np.ndarray
) -> GradientSet:
    """Backpropagate d(loss)/d(rendered color) to all splat parameters.

    Parameters
    ----------
    cloud : the cloud passed to the forward `render` call.
    cache : RenderCache from `render(..., with_cache=True)`.
    d_color : (H, W, 3) upstream gradient.
    """
    proj = cache.proj
    dtype = proj.dtype
    n = proj.n_total
    k_sh = cloud.sh.shape[1]
    cam = proj.camera
    hw = cam.height * cam.width

    grads = GradientSet(
        means=np.zeros((n, 3), dtype=dtype),
        log_scales=np.zeros((n, 3), dtype=dtype),
        quats=np.zeros((n, 4), dtype=dtype),
        opacities=np.zeros(n, dtype=dtype),
        sh=np.zeros((n, k_sh, 3), dtype=dtype),
        screen_grad_norm=np.zeros(n, dtype=dtype),
        visible=np.zeros(n, dtype=bool),
    )
    if cache.pair_splat.shape[0] == 0:
        return grads

    retained = cache.retained  # (M,) original indices, depth order
    m = retained.shape[0]
    pair_s = cache.pair_splat  # index into retained
    pixel = cache.pair_pixel
    orig = retained[pair_s]
    grads.visible[retained] = True

    gC = d_color.reshape(hw, 3).astype(dtype, copy=False)
    gC_pair = gC[pixel]  # (P, 3)
    colors = proj.color[orig]  # (P, 3)
    G = cache.pair_G
    T = cache.pair_T
    keep = cache.pair_keep
    alpha_s = proj.alpha[orig]
    a_pair = np.minimum(alpha_s * G, 1.0 - 1e-15)
    clamp_ok = (alpha_s * G) < (1.0 - 1e-15)
    w = np.where(keep, a_pair * T, 0.0)

    # -- compositing backward -------------------------------------------
    phi = np.einsum("pc,pc->p", gC_pair, colors)
    psi = w * phi
    bgdot = gC @ cache.background  # (HW,)
    total_psi = np.bincount(pixel, weights=psi, minlength=hw)
    prefix_psi = _segment_inclusive_cumsum(psi, cache.seg_first)
    suffix = total_psi[pixel] - prefix_psi + bgdot[pixel] * cache.t_final[pixel]
    d_g = np.where(keep, T * phi - suffix / (1.0 - a_pair), 0.0)

    d_color_pair = gC_pair * w[:, None]  # dL/d(splat color) per pair
    d_alpha_pairs = d_g * G * clamp_ok
    d_G = d_g * alpha_s * clamp_ok
    d_q = -0.5 * G * d_G

    a00, a01, a11 = (proj.conic[orig, 0], proj.conic[orig, 1], proj.conic[orig, 2])
    dx, dy = cache.pair_dx, cache.pair_dy
    v1 = a00 * dx + a01 * dy
    v2 = a01 * dx + a11 * dy

    def acc(vals: np.ndarray) -> np.ndarray:
        return np.bincount(pair_s, weights=vals, minlength=m)

    g_u = acc(d_q * (-2.0) * v1)
    g_v = acc(d_q * (-2.0) * v2)
    gA = np.stack([acc(d_q * dx * dx), acc(d_q * 2.0 * dx * dy), acc(d_q * dy * dy)], axis=1)
    g_alpha = acc(d_alpha_pairs)
    g_color = np.stack([acc(d_color_pair[:, c]) for c in range(3)], axis=1)

    # -- per-splat chains (vectorized over retained splats) --------------
    r = retained
    grads.screen_grad_norm[r] = np.hypot(g_u, g_v)

    # opacity logit
    al = proj.alpha[r]
    grads.opacities[r] = g_alpha * al * (1.0 - al)

    # SH coefficients and the view-direction term
    g_raw = g_color * proj.color_active[r]
    grads.sh[r] = proj.basis[r][:, :, None] * g_raw[:, None, :]
    basis_grad = shlib.sh_basis_grad(proj.dirs[r], cloud.sh_degree)  # (M, K, 3)
    sh_r = cloud.sh[r].astype(dtype, copy=False)
    g_dir = np.einsum("nc,nkc,nkd->nd", g_raw, sh_r, basis_grad)
    dirs = proj.dirs[r]
    g_mean_dir = (g_dir - dirs * np.einsum("nd,nd->n", dirs, g_dir)[:, None]) / proj.dir_len[r][:, None]

    # conic -> 2D covariance (full-matrix form)
    GA = np.empty((m, 2, 2), dtype=dtype)
    GA[:, 0, 0] = gA[:, 0]
    GA[:, 0, 1] = GA[:, 1, 0] = 0.5 * gA[:, 1]
    GA[:, 1, 1] = gA[:, 2]
    A = np.empty((m, 2, 2), dtype=dtype)
    A[:, 0, 0] = proj.conic[r, 0]
    A[:, 0, 1] = A[:, 1, 0] = proj.conic[r, 1]
    A[:, 1, 1] = proj.conic[r, 2]
    GC = -A @ GA @ A  # (M, 2, 2), symmetric

    M_r = proj.M[r]  # (M, 2, 3)
    Sigma_r = proj.Sigma[r]
    G_Sigma = M_r.transpose(0, 2, 1) @ GC @ M_r  # (M, 3, 3)
    G_M = 2.0 * GC @ M_r @ Sigma_r  # (M, 2, 3)
    G_J = G_M @ proj.camera.R.astype(dtype).T[None]  # M = J R

    # perspective Jacobian entries back to the camera-space mean
    xc = proj.mean_cam[r, 0]
    yc = proj.mean_cam[r, 1]
    zc = proj.mean_cam[r, 2]
    fx = dtype.type(cam.fx)
    fy = dtype.type(cam.fy)
    inv_z2 = 1.0 / (zc * zc)
    g_cam = np.zeros((m, 3), dtype=dtype)
    g_cam[:, 0] = G_J[:, 0, 2] * (-fx * inv_z2)
    g_cam[:, 1] = G_J[:, 1, 2] * (-fy * inv_z2)
    g_cam[:, 2] = (
        G_J[:, 0, 0] * (-fx * inv_z2)
        + G_J[:, 1, 1] * (-fy * inv_z2)
        + G_J[:, 0, 2] * (2.0 * fx * xc * inv_z2 / zc)
        + G_J[:, 1, 2] * (2.0 * fy * yc * inv_z2 / zc)
    )
    # screen mean back to the camera-space mean (the same Jacobian)
    g2d = np.stack([g_u, g_v], axis=1)
    g_cam += np.einsum("nij,ni->nj", proj.J[r], g2d)

    # Sigma = R_q diag(D) R_q^T
    Rq = proj.R_q[r]
    D = proj.D[r]
    GD = np.einsum("nji,njk,nkl->nil", Rq, G_Sigma, Rq)  # R^T G R
    g_log_scales = np.stack([GD[:, 0, 0], GD[:, 1, 1], GD[:, 2, 2]], axis=1) * 2.0 * D
    G_Rq = 2.0 * G_Sigma @ (Rq * D[:, None, :])
    dR_dq = quat_rotmat_jacobian(proj.q_hat[r])  # (M, 4, 3, 3)
    g_qhat = np.einsum("nij,nkij->nk", G_Rq, dR_dq)
    qh = proj.q_hat[r].astype(dtype, copy=False)
    g_quat = (g_qhat - qh * np.einsum("nk,nk->n", qh, g_qhat)[:, None]) / proj.q_norm[r][:, None]

    grads.log_scales[r] = g_log_scales
    grads.quats[r] = g_quat
    grads.means[r] = np.einsum("ji,nj->ni", proj.camera.R.astype(dtype), g_cam) + g_mean_dir
    return grads
