"""The built-in concept model.

A scene concept is a small stack of token embeddings; a fixed 2D cosine
basis projects them to a latent-resolution belief of the clean scene.
Concept learning is textual inversion at toy scale: gradient descent on
the embeddings alone, minimizing the mask-weighted squared residual
between predicted and true noise over the training latents, with the
projector and schedule frozen. The basis is resolution-free, so a
concept learned on one image size can denoise latents of any other.

This model ships so the service runs self-contained on a CPU. A real
latent-diffusion backend plugs in behind the same three methods
(model_id, learn, inpaint); the registry in `build_model` keys off the
configured model string, which is never a hardcoded weights path.
"""

from __future__ import annotations

import numpy as np

from . import codec
from .schedule import (
    NoiseSchedule,
    forward_noise,
    repaint_step,
    timestep_sequence,
)

MODES = 4  # cosine modes per axis; 3 * MODES^2 coefficients per token
LEARN_LR = 0.05
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


def _axis_basis(n: int) -> np.ndarray:
    """[n, MODES] cosine modes over cell centers, unit DC term."""
    grid = (np.arange(n) + 0.5) / n
    return np.cos(np.pi * grid[:, None] * np.arange(MODES)[None, :])


def project_concept(embedding: np.ndarray, hw: tuple[int, int]) -> np.ndarray:
    """Token embeddings [tokens, 3, MODES, MODES] -> latent [h, w, 3]."""
    by = _axis_basis(hw[0])
    bx = _axis_basis(hw[1])
    z = np.einsum("tcjk,yj,xk->yxc", embedding, by, bx)
    return z / embedding.shape[0]


class TinyConceptModel:
    """Analytic latent model: denoising believes the scene is the
    concept projection, which makes eps-prediction a closed form."""

    model_id = "builtin:tiny"

    def __init__(self):
        self.sched = NoiseSchedule()

    def _predict_eps(self, embedding: np.ndarray):
        def predict(z_t: np.ndarray, t: int) -> np.ndarray:
            z0_hat = project_concept(embedding, z_t.shape[:2])
            ab = self.sched.alpha_bars[t]
            return (z_t - np.sqrt(ab) * z0_hat) / np.sqrt(1.0 - ab)
        return predict

    def learn(self, images: list[np.ndarray], masks: list[np.ndarray],
              steps: int, token_count: int, seed: int = 0) -> np.ndarray:
        """Optimize token embeddings against the (1 - mask)-weighted
        noise residual. All-ones masks zero every gradient, so the
        embeddings come back exactly at their (zero) initialization."""
        latents = [codec.encode(img) for img in images]
        weights = [1.0 - codec.latent_mask(m) for m in masks]
        rng = np.random.default_rng(seed)
        emb = np.zeros((token_count, 3, MODES, MODES))
        m1 = np.zeros_like(emb)
        m2 = np.zeros_like(emb)

        for step in range(1, steps + 1):
            i = int(rng.integers(len(latents)))
            t = int(rng.integers(1, self.sched.timesteps + 1))
            eps = rng.standard_normal(latents[i].shape)
            z_t = forward_noise(latents[i], t, self.sched, eps)
            eps_hat = self._predict_eps(emb)(z_t, t)
            w = weights[i][:, :, None]
            resid = w * (eps_hat - eps)
            # d(eps_hat)/d(z0_hat) = -sqrt(ab/(1-ab)); chain through the
            # linear projector onto the basis coefficients
            ab = self.sched.alpha_bars[t]
            scale = -np.sqrt(ab / (1.0 - ab)) * 2.0 / resid.size
            by = _axis_basis(z_t.shape[0])
            bx = _axis_basis(z_t.shape[1])
            g = scale * np.einsum("yxc,yj,xk->cjk", resid, by, bx)
            grad = np.broadcast_to(g / token_count, emb.shape)

            m1 = ADAM_BETAS[0] * m1 + (1 - ADAM_BETAS[0]) * grad
            m2 = ADAM_BETAS[1] * m2 + (1 - ADAM_BETAS[1]) * grad ** 2
            hat1 = m1 / (1 - ADAM_BETAS[0] ** step)
            hat2 = m2 / (1 - ADAM_BETAS[1] ** step)
            emb = emb - LEARN_LR * hat1 / (np.sqrt(hat2) + ADAM_EPS)
        return emb

    def inpaint(self, image: np.ndarray, mask: np.ndarray,
                embedding: np.ndarray, strength: float, steps: int,
                seed: int = 0) -> np.ndarray:
        """Masked reverse rollout from the image noised to
        round(strength * T); unmasked pixels are restored exactly by the
        final pixel-space composite."""
        rng = np.random.default_rng(seed)
        z0 = codec.encode(image)
        m = codec.latent_mask(mask)[:, :, None]
        t_start = max(1, round(strength * self.sched.timesteps))
        z = forward_noise(z0, t_start, self.sched,
                          rng.standard_normal(z0.shape))
        predict = self._predict_eps(embedding)
        for t in timestep_sequence(strength, steps, self.sched):
            z = repaint_step(z, z0, m, t, predict, self.sched, rng)
        decoded = codec.decode(z, image.shape[:2])
        m_pix = mask[:, :, None]
        return (1.0 - m_pix) * image + m_pix * decoded


def build_model(model_name: str):
    """Resolve the configured model string. Only the built-in ships in
    this package; anything else names a diffusion checkpoint this
    deployment does not bundle."""
    if model_name == TinyConceptModel.model_id:
        return TinyConceptModel()
    raise ValueError(
        f"model {model_name!r} is not available in this build; "
        f"expected {TinyConceptModel.model_id!r} or a deployment that "
        "registers its own backend"
    )
