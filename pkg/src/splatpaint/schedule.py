"""Masked reverse-diffusion over an abstract denoiser.

The schedule is standard DDPM: T = 1000 timesteps, linear betas from
1e-4 to 0.02, sigma_t = sqrt(beta_t). Arrays are indexed by timestep
with the convention alpha_bar[0] = 1 (t = 0 is the clean signal), so
forward_noise(z0, 0) is exactly z0.

Each masked reverse step denoises only where the latent mask says so:
the unmasked part is redrawn from the forward process at t-1 and the
masked part takes the reverse-step estimate, blended with the
(continuous) mask. Randomness is pulled from a caller-supplied
Generator in a fixed order -- the forward noise for the unmasked part
first, then the reverse-step noise -- so rollouts are reproducible from
a seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .errors import DimensionMismatch

DEFAULT_TIMESTEPS = 1000
BETA_MIN = 1e-4
BETA_MAX = 0.02


@dataclass
class NoiseSchedule:
    timesteps: int = DEFAULT_TIMESTEPS
    beta_min: float = BETA_MIN
    beta_max: float = BETA_MAX
    # per-timestep tables, index 0 is the no-noise convention slot
    betas: np.ndarray = field(init=False, repr=False)
    alpha_bars: np.ndarray = field(init=False, repr=False)
    sigmas: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.timesteps < 1:
            raise ValueError("schedule needs at least 1 timestep")
        if not (0.0 < self.beta_min <= self.beta_max < 1.0):
            raise ValueError("betas must satisfy 0 < min <= max < 1")
        self.betas = np.zeros(self.timesteps + 1)
        self.betas[1:] = np.linspace(self.beta_min, self.beta_max,
                                     self.timesteps)
        self.alpha_bars = np.cumprod(1.0 - self.betas)
        self.sigmas = np.sqrt(self.betas)

    def check_t(self, t: int, low: int = 1) -> None:
        if not (low <= t <= self.timesteps):
            raise ValueError(
                f"timestep {t} outside [{low}, {self.timesteps}]"
            )


class Denoiser(Protocol):
    def predict(self, z_t: np.ndarray, t: int, handle: str) -> np.ndarray:
        """Predicted noise for z_t at timestep t, same shape as z_t."""


def forward_noise(
    z0: np.ndarray, t: int, schedule: NoiseSchedule, eps: np.ndarray
) -> np.ndarray:
    """q(z_t | z0): sqrt(alpha_bar_t) z0 + sqrt(1 - alpha_bar_t) eps."""
    schedule.check_t(t, low=0)
    if eps.shape != z0.shape:
        raise DimensionMismatch(f"noise {eps.shape} vs signal {z0.shape}")
    ab = schedule.alpha_bars[t]
    return np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps


def repaint_step(
    z_t: np.ndarray,
    z0: np.ndarray,
    mask_latent: np.ndarray,
    t: int,
    denoiser: Denoiser,
    handle: str,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
) -> np.ndarray:
    """One masked reverse step: z_t -> blended z_{t-1}.

    The unmasked region is a fresh forward draw of z0 at t-1 (exactly z0
    when t = 1); the masked region is the reverse-process estimate, with
    its noise term dropped on the final step.
    """
    schedule.check_t(t)
    if mask_latent.shape != z_t.shape[-mask_latent.ndim:]:
        raise DimensionMismatch(
            f"latent mask {mask_latent.shape} vs latent {z_t.shape}"
        )

    # draw order is part of the seeded contract: forward noise, then xi
    z_prev = forward_noise(z0, t - 1, schedule,
                           rng.standard_normal(z0.shape))
    eps_hat = denoiser.predict(z_t, t, handle)
    beta = schedule.betas[t]
    ab = schedule.alpha_bars[t]
    z_hat = (z_t - beta / np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(1.0 - beta)
    if t > 1:
        z_hat = z_hat + schedule.sigmas[t] * rng.standard_normal(z_t.shape)
    return (1.0 - mask_latent) * z_prev + mask_latent * z_hat


def _overlap_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Row-stochastic fractional-overlap matrix mapping n_in cells to
    n_out cells (exact area averaging for any ratio)."""
    m = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for row in range(n_out):
        lo = row * scale
        hi = (row + 1) * scale
        first = int(np.floor(lo))
        last = int(np.ceil(hi))
        for col in range(first, min(last, n_in)):
            m[row, col] = min(hi, col + 1) - max(lo, col)
    return m / scale


def downsample_mask(mask: np.ndarray, latent_hw: tuple[int, int]) -> np.ndarray:
    """Area-average a pixel mask to the latent resolution (continuous
    values in [0, 1]; no thresholding)."""
    mask = np.asarray(mask, dtype=np.float64)
    h, w = latent_hw
    if mask.shape == (h, w):
        return mask.copy()
    ah = _overlap_matrix(h, mask.shape[0])
    aw = _overlap_matrix(w, mask.shape[1])
    return ah @ mask @ aw.T


class IdentityCodec:
    """Pixel-space stand-in for a latent autoencoder: channels-first
    view of the image, latent resolution = pixel resolution."""

    def encode(self, image: np.ndarray) -> np.ndarray:
        return np.transpose(np.asarray(image, dtype=np.float64), (2, 0, 1))

    def decode(self, z: np.ndarray) -> np.ndarray:
        return np.transpose(z, (1, 2, 0))

    def latent_hw(self, image_hw: tuple[int, int]) -> tuple[int, int]:
        return image_hw


class OracleDenoiser:
    """Test denoiser that knows the clean latent: returns the exact noise
    implied by the forward process, eps = (z_t - sqrt(ab) z0) / sqrt(1-ab).
    With sigmas forced to zero a full rollout reproduces z0."""

    def __init__(self, z0: np.ndarray, schedule: NoiseSchedule):
        self.z0 = z0
        self.schedule = schedule

    def predict(self, z_t: np.ndarray, t: int, handle: str) -> np.ndarray:
        ab = self.schedule.alpha_bars[t]
        return (z_t - np.sqrt(ab) * self.z0) / np.sqrt(1.0 - ab)


def timestep_sequence(t_start: int, steps: int) -> np.ndarray:
    """Evenly spaced descending timesteps from t_start, always ending
    at 1 (the rollout only reaches a clean latent through the terminal
    t = 1 step). A single-step sequence is just that terminal step."""
    if t_start < 1:
        raise ValueError("t_start must be >= 1")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if steps == 1:
        return np.array([1], dtype=np.int64)
    seq = np.unique(np.round(
        np.linspace(t_start, 1, num=min(steps, t_start))
    ).astype(np.int64))[::-1]
    return seq


def concept_inpaint_local(
    image: np.ndarray,
    fused_mask: np.ndarray,
    denoiser: Denoiser,
    handle: str,
    codec,
    strength: float,
    steps: int,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
) -> np.ndarray:
    """Masked-diffusion inpainting with a pluggable denoiser and codec.

    Starts from the image noised to t* = round(strength * T), walks the
    reverse schedule over `steps` evenly spaced timesteps, decodes, and
    hard-composites so pixels with fused_mask = 0 are returned exactly.
    """
    if not (0.0 < strength <= 1.0):
        raise ValueError(f"strength must be in (0, 1], got {strength}")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    image = np.asarray(image, dtype=np.float64)
    fused_mask = np.asarray(fused_mask, dtype=np.float64)
    if fused_mask.shape != image.shape[:2]:
        raise DimensionMismatch(
            f"mask {fused_mask.shape} vs image {image.shape[:2]}"
        )

    z0 = codec.encode(image)
    latent_hw = z0.shape[-2:]
    m_latent = downsample_mask(fused_mask, latent_hw)

    t_start = max(1, int(round(strength * schedule.timesteps)))
    z = forward_noise(z0, t_start, schedule, rng.standard_normal(z0.shape))
    for t in timestep_sequence(t_start, steps):
        z = repaint_step(z, z0, m_latent, int(t), denoiser, handle,
                         schedule, rng)
    decoded = codec.decode(z)
    if decoded.shape != image.shape:
        raise DimensionMismatch(
            f"decoded {decoded.shape} vs image {image.shape}"
        )
    m3 = fused_mask[:, :, None]
    return (1.0 - m3) * image + m3 * decoded
