"""Pixel <-> latent conversion.

The latent grid is an area-averaged, zero-centered copy of the image at
1/LATENT_FACTOR resolution. Masks ride through the same area average
and stay fractional; a latent cell half-covered by mask blends half.
Decoding upsamples bilinearly, so it is lossy by design: the server's
final pixel-space composite is what guarantees unmasked preservation,
not the codec.
"""

from __future__ import annotations

import numpy as np

LATENT_FACTOR = 4


def _pad_to_multiple(arr: np.ndarray, f: int) -> np.ndarray:
    h, w = arr.shape[:2]
    ph, pw = (-h) % f, (-w) % f
    if ph == 0 and pw == 0:
        return arr
    return np.pad(arr, ((0, ph), (0, pw)) + ((0, 0),) * (arr.ndim - 2),
                  mode="edge")


def area_downsample(arr: np.ndarray, f: int = LATENT_FACTOR) -> np.ndarray:
    """Box-average over f x f blocks, edge-replicating partial blocks."""
    a = _pad_to_multiple(np.asarray(arr, dtype=np.float64), f)
    h, w = a.shape[0] // f, a.shape[1] // f
    if a.ndim == 2:
        return a.reshape(h, f, w, f).mean(axis=(1, 3))
    return a.reshape(h, f, w, f, a.shape[2]).mean(axis=(1, 3))


def bilinear_upsample(arr: np.ndarray, out_hw: tuple[int, int],
                      f: int = LATENT_FACTOR) -> np.ndarray:
    """Invert area_downsample's grid: each latent cell sits at the
    center of its f x f block; edges clamp."""
    h, w = arr.shape[:2]
    H, W = out_hw
    ys = np.clip((np.arange(H) + 0.5) / f - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(W) + 0.5) / f - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    if arr.ndim == 3:
        fy = fy[..., None]
        fx = fx[..., None]
    top = arr[y0][:, x0] * (1 - fx) + arr[y0][:, x1] * fx
    bot = arr[y1][:, x0] * (1 - fx) + arr[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def encode(image: np.ndarray) -> np.ndarray:
    """float [H,W,3] in [0,1] -> latent [h,w,3] in [-1,1]."""
    return 2.0 * area_downsample(image) - 1.0


def decode(latent: np.ndarray, out_hw: tuple[int, int]) -> np.ndarray:
    """latent [h,w,3] -> float image [H,W,3], clipped to [0,1]."""
    return np.clip((bilinear_upsample(latent, out_hw) + 1.0) / 2.0, 0.0, 1.0)


def latent_mask(mask: np.ndarray) -> np.ndarray:
    """Pixel mask [H,W] in [0,1] -> fractional latent mask [h,w]."""
    return area_downsample(mask)
