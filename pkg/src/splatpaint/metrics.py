"""Image-quality metrics and the bbox-crop evaluation protocol.

All metrics assume images on a unit dynamic range. Object-centric
evaluation crops both images to the mask's bounding box first (see
masked_bbox_crop), so scores are not diluted by untouched background.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch
from .losses import ssim as _windowed_ssim

# Stand-in for +inf so identical images stay finite in reports.
PSNR_SENTINEL = 99.0


def psnr(reference: np.ndarray, test: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB between two [0, 1] images."""
    reference = np.asarray(reference, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if reference.shape != test.shape:
        raise DimensionMismatch(
            f"psnr: dimension-mismatch {reference.shape} vs {test.shape}"
        )
    mse = float(np.mean((reference - test) ** 2))
    if mse == 0.0:
        return PSNR_SENTINEL
    return float(10.0 * np.log10(1.0 / mse))


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Structural similarity, uniformly averaged over pixels and channels.

    11x11 Gaussian window (sigma 1.5) with border-renormalized statistics,
    stabilizers (0.01)^2 and (0.03)^2 on a unit range. Symmetric, 1.0 for
    identical images.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return _windowed_ssim(a, b)


def masked_bbox_crop(image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Crop `image` to the tight axis-aligned bounding box of `mask` > 0.5.

    The crop is a copy, never a view. Raises ValueError on an empty mask
    and DimensionMismatch when the mask does not match the image grid.
    """
    image = np.asarray(image)
    mask = np.asarray(mask)
    if mask.shape != image.shape[:2]:
        raise DimensionMismatch(
            f"masked_bbox_crop: mask {mask.shape} vs image {image.shape[:2]}"
        )
    rows = np.flatnonzero((mask > 0.5).any(axis=1))
    cols = np.flatnonzero((mask > 0.5).any(axis=0))
    if rows.size == 0:
        raise ValueError("empty-mask: no positive pixels to bound")
    return image[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1].copy()
