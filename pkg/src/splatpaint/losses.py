"""Weighted photometric loss: L1 plus structural-dissimilarity term.

    loss = l1_weight * mean_W(|I - I_hat|) + dssim_weight * (1 - SSIM_W) / 2

Both terms are weighted means over the per-pixel weight map W (so zeroing a
region is the same as cropping it away, and an all-zero W is rejected as
undefined). The SSIM statistics use an 11x11 Gaussian window (sigma 1.5)
masked by W and renormalized: window moments are computed as
conv(kernel * W * x) / conv(kernel * W) with zero padding. Consequences,
both load-bearing for the contract:

* pixels with zero weight contribute nothing to the loss or its gradient,
  even through neighboring SSIM windows;
* with W == 1 this reduces to standard SSIM with border-renormalized
  windows, and SSIM of an image with itself is exactly 1.

Stabilizers are C1 = (0.01)^2 and C2 = (0.03)^2 on a unit dynamic range.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import correlate1d

from .errors import DimensionMismatch

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
DEFAULT_L1_WEIGHT = 0.8
DEFAULT_DSSIM_WEIGHT = 0.2
_Z_FLOOR = 1e-12


def _gaussian_kernel(window: int, sigma: float, dtype) -> np.ndarray:
    half = (window - 1) / 2.0
    x = np.arange(window, dtype=dtype) - half
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _conv2(field: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable symmetric 2D convolution with zero padding."""
    tmp = correlate1d(field, kernel, axis=0, mode="constant", cval=0.0)
    return correlate1d(tmp, kernel, axis=1, mode="constant", cval=0.0)


def _check_inputs(reference: np.ndarray, rendered: np.ndarray, weights: np.ndarray):
    if reference.shape != rendered.shape:
        raise DimensionMismatch(
            f"image shapes differ: {reference.shape} vs {rendered.shape}"
        )
    if reference.ndim != 3 or reference.shape[2] != 3:
        raise DimensionMismatch(f"expected (H, W, 3) images, got {reference.shape}")
    if weights.shape != reference.shape[:2]:
        raise DimensionMismatch(
            f"weight map {weights.shape} does not match image {reference.shape[:2]}"
        )
    if not (np.all(np.isfinite(reference)) and np.all(np.isfinite(rendered))
            and np.all(np.isfinite(weights))):
        raise ValueError("non-finite values in loss inputs")
    if weights.min() < 0.0:
        raise ValueError("weight map must be non-negative")


class _SsimPieces:
    """Forward SSIM fields kept around for the backward pass."""

    __slots__ = ("Z", "mu_x", "mu_y", "sxy", "sy2", "A1", "A2", "B1", "B2",
                 "ssim_map", "kernel", "W")


def _masked_ssim(
    reference: np.ndarray, rendered: np.ndarray, weights: np.ndarray,
    window: int, sigma: float,
) -> _SsimPieces:
    dtype = np.result_type(reference.dtype, rendered.dtype, np.float64)
    x = reference.astype(dtype, copy=False)
    y = rendered.astype(dtype, copy=False)
    W = weights.astype(dtype, copy=False)
    kernel = _gaussian_kernel(window, sigma, dtype)

    p = _SsimPieces()
    p.kernel = kernel
    p.W = W
    Z = _conv2(W, kernel)
    p.Z = np.maximum(Z, _Z_FLOOR)

    Wx = W[:, :, None]

    def F(field: np.ndarray) -> np.ndarray:
        out = np.empty_like(field)
        for c in range(field.shape[2]):
            out[:, :, c] = _conv2(field[:, :, c], kernel) / p.Z
        return out

    p.mu_x = F(Wx * x)
    p.mu_y = F(Wx * y)
    sx2 = F(Wx * x * x) - p.mu_x ** 2
    p.sy2 = F(Wx * y * y) - p.mu_y ** 2
    p.sxy = F(Wx * x * y) - p.mu_x * p.mu_y
    p.A1 = 2.0 * p.mu_x * p.mu_y + SSIM_C1
    p.A2 = 2.0 * p.sxy + SSIM_C2
    p.B1 = p.mu_x ** 2 + p.mu_y ** 2 + SSIM_C1
    p.B2 = sx2 + p.sy2 + SSIM_C2
    p.ssim_map = (p.A1 * p.A2) / (p.B1 * p.B2)  # (H, W, 3)
    return p


def ssim(
    reference: np.ndarray,
    test: np.ndarray,
    weights: np.ndarray | None = None,
    window: int = SSIM_WINDOW,
    sigma: float = SSIM_SIGMA,
) -> float:
    """Weighted-mean SSIM between two images (channel-averaged map).

    Symmetric in its image arguments; 1.0 exactly for identical images.
    """
    reference = np.asarray(reference)
    test = np.asarray(test)
    if weights is None:
        weights = np.ones(reference.shape[:2], dtype=np.float64)
    weights = np.asarray(weights)
    _check_inputs(reference, test, weights)
    wsum = weights.sum()
    if wsum <= 0.0:
        raise ValueError("all-zero weight map: SSIM undefined")
    p = _masked_ssim(reference, test, weights, window, sigma)
    per_pixel = p.ssim_map.mean(axis=2)
    return float((weights * per_pixel).sum() / wsum)


def loss_weighted(
    reference: np.ndarray,
    rendered: np.ndarray,
    weights: np.ndarray,
    l1_weight: float = DEFAULT_L1_WEIGHT,
    dssim_weight: float = DEFAULT_DSSIM_WEIGHT,
) -> float:
    """Scalar training loss. See module docstring for the exact definition."""
    loss, _ = loss_weighted_grad(
        reference, rendered, weights, l1_weight, dssim_weight, need_grad=False
    )
    return loss


def loss_weighted_grad(
    reference: np.ndarray,
    rendered: np.ndarray,
    weights: np.ndarray,
    l1_weight: float = DEFAULT_L1_WEIGHT,
    dssim_weight: float = DEFAULT_DSSIM_WEIGHT,
    need_grad: bool = True,
) -> tuple[float, np.ndarray | None]:
    """Loss and its gradient with respect to the rendered image.

    The L1 subgradient at zero difference is taken as 0.
    """
    reference = np.asarray(reference)
    rendered = np.asarray(rendered)
    weights = np.asarray(weights)
    _check_inputs(reference, rendered, weights)
    wsum = float(weights.sum())
    if wsum <= 0.0:
        raise ValueError("all-zero weight map: loss undefined")

    dtype = np.result_type(reference.dtype, rendered.dtype, np.float64)
    x = reference.astype(dtype, copy=False)
    y = rendered.astype(dtype, copy=False)
    W = weights.astype(dtype, copy=False)

    diff = y - x
    l1 = float((W[:, :, None] * np.abs(diff)).sum() / (3.0 * wsum))

    p = _masked_ssim(x, y, W, SSIM_WINDOW, SSIM_SIGMA)
    ssim_w = float((W * p.ssim_map.mean(axis=2)).sum() / wsum)
    dssim = (1.0 - ssim_w) / 2.0
    loss = l1_weight * l1 + dssim_weight * dssim
    if not need_grad:
        return loss, None

    grad = l1_weight * W[:, :, None] * np.sign(diff) / (3.0 * wsum)

    # upstream gradient on each channel's SSIM map
    u = (-dssim_weight / (2.0 * wsum * 3.0)) * W
    u3 = u[:, :, None]
    inv_b1b2 = 1.0 / (p.B1 * p.B2)
    g_a1 = u3 * p.A2 * inv_b1b2
    g_a2 = u3 * p.A1 * inv_b1b2
    g_b1 = -u3 * p.ssim_map / p.B1
    g_b2 = -u3 * p.ssim_map / p.B2
    g_sxy = 2.0 * g_a2
    g_sy2 = g_b2
    g_mu_y = (2.0 * p.mu_x * g_a1 + 2.0 * p.mu_y * g_b1
              - p.mu_x * g_sxy - 2.0 * p.mu_y * g_sy2)

    W3 = W[:, :, None]

    def F_adj(field: np.ndarray) -> np.ndarray:
        out = np.empty_like(field)
        for c in range(3):
            out[:, :, c] = _conv2(field[:, :, c] / p.Z, p.kernel)
        return W3 * out

    grad = grad + F_adj(g_mu_y) + F_adj(g_sxy) * x + F_adj(g_sy2) * 2.0 * y
    return loss, grad
