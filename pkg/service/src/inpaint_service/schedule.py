"""Masked reverse-diffusion math.

The primary client implements the same equations against its own mock
denoisers; the contract between the two packages is the math itself,
not shared code. Index 0 is the identity step: beta[0] = 0, so
alpha_bar[0] = 1 and forward_noise(z, 0) returns z untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TIMESTEPS = 1000
BETA_START = 1e-4
BETA_END = 0.02


@dataclass
class NoiseSchedule:
    timesteps: int = TIMESTEPS
    betas: np.ndarray = field(default=None)  # type: ignore[assignment]
    alphas: np.ndarray = field(default=None)  # type: ignore[assignment]
    alpha_bars: np.ndarray = field(default=None)  # type: ignore[assignment]
    sigmas: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.betas is None:
            self.betas = np.concatenate(
                [[0.0], np.linspace(BETA_START, BETA_END, self.timesteps)])
        self.alphas = 1.0 - self.betas
        self.alpha_bars = np.cumprod(self.alphas)
        self.sigmas = np.sqrt(self.betas)


def forward_noise(z0: np.ndarray, t: int, sched: NoiseSchedule,
                  eps: np.ndarray) -> np.ndarray:
    if not 0 <= t <= sched.timesteps:
        raise ValueError(f"timestep {t} outside 0..{sched.timesteps}")
    ab = sched.alpha_bars[t]
    return np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps


def repaint_step(z_t: np.ndarray, z0: np.ndarray, mask: np.ndarray,
                 t: int, predict_eps, sched: NoiseSchedule,
                 rng: np.random.Generator) -> np.ndarray:
    """One masked reverse step: the unmasked region is re-drawn from the
    forward process of the known latent, the masked region takes the
    plain reverse step, and the two blend by the (possibly fractional)
    mask. The forward draw comes first so the random stream is identical
    whether or not the mask is degenerate."""
    if not 1 <= t <= sched.timesteps:
        raise ValueError(f"timestep {t} outside 1..{sched.timesteps}")
    known = forward_noise(z0, t - 1, sched, rng.standard_normal(z0.shape))
    eps_hat = predict_eps(z_t, t)
    denoised = (z_t - sched.betas[t] / np.sqrt(1.0 - sched.alpha_bars[t])
                * eps_hat) / np.sqrt(sched.alphas[t])
    if t > 1:
        denoised = denoised + sched.sigmas[t] * rng.standard_normal(z0.shape)
    else:
        known = z0
    return (1.0 - mask) * known + mask * denoised


def timestep_sequence(strength: float, steps: int,
                      sched: NoiseSchedule) -> list[int]:
    """Evenly spaced descending timesteps from round(strength*T) to 1.
    A rollout always finishes through the terminal t = 1 step, so a
    single-step sequence is just [1]."""
    if not 0.0 < strength <= 1.0:
        raise ValueError(f"strength {strength} outside (0, 1]")
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    start = max(1, round(strength * sched.timesteps))
    if steps == 1:
        return [1]
    ts = np.unique(np.round(np.linspace(start, 1, min(steps, start)))
                   .astype(int))
    return [int(t) for t in ts[::-1]]
