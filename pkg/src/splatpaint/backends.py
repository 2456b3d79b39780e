"""Pluggable inpainting backends.

A backend learns a scene concept from (image, fused-mask) pairs and
then fills masked regions of individual images. Two mock backends
cover testing: IdentityBackend leaves images untouched and
OracleBackend substitutes known clean targets. RemoteBackend speaks
the HTTP wire protocol of the companion inpainting service.

Callers must not rely on a backend preserving unmasked pixels; the
hard composite is applied locally via `composite` regardless of what
the backend returns. RemoteBackend additionally *validates* that the
service stayed within the contract tolerance before handing the image
back, so a drifting service fails loudly rather than silently.
"""

from __future__ import annotations

import io
import logging
import threading
import time
from typing import Protocol, Sequence

import numpy as np
import requests
from PIL import Image

from .errors import BackendError, ContractViolation, DimensionMismatch

log = logging.getLogger(__name__)

# service may re-encode through 8-bit buffers twice, hence 2/255
UNMASKED_DRIFT_TOLERANCE = 2.0 / 255.0
DEFAULT_LEARN_STEPS = 3000
DEFAULT_INPAINT_STEPS = 50


class InpaintBackend(Protocol):
    def learn_concept(
        self,
        images: Sequence[np.ndarray],
        fused_masks: Sequence[np.ndarray],
        steps: int = DEFAULT_LEARN_STEPS,
        token_count: int = 1,
    ) -> str:
        """Learn a scene concept; returns an opaque handle."""

    def inpaint(
        self,
        image: np.ndarray,
        fused_mask: np.ndarray,
        handle: str,
        strength: float,
        steps: int = DEFAULT_INPAINT_STEPS,
        seed: int = 0,
    ) -> np.ndarray:
        """Fill the masked region of one image; same shape as input."""


def composite(image: np.ndarray, fused_mask: np.ndarray, filled: np.ndarray) -> np.ndarray:
    """Hard pixel composite: unmasked pixels come from `image` exactly."""
    image = np.asarray(image, dtype=np.float64)
    filled = np.asarray(filled, dtype=np.float64)
    if filled.shape != image.shape:
        raise ContractViolation(
            f"backend returned shape {filled.shape}, expected {image.shape}"
        )
    m3 = np.asarray(fused_mask, dtype=np.float64)[:, :, None]
    return (1.0 - m3) * image + m3 * filled


def _check_strength(strength: float) -> None:
    if not (0.0 < strength <= 1.0):
        raise ValueError(f"strength must be in (0, 1], got {strength}")


class IdentityBackend:
    """Returns every image unchanged. Useful for exercising pipeline
    plumbing where the inpainted inputs must equal the raw inputs."""

    def learn_concept(self, images, fused_masks, steps=DEFAULT_LEARN_STEPS,
                      token_count=1) -> str:
        del images, fused_masks, steps, token_count
        return "identity"

    def inpaint(self, image, fused_mask, handle, strength,
                steps=DEFAULT_INPAINT_STEPS, seed=0) -> np.ndarray:
        _check_strength(strength)
        del fused_mask, handle, steps, seed
        return np.array(image, dtype=np.float64, copy=True)


class OracleBackend:
    """Mock backend that knows the clean target for each source image.

    Matches the incoming image against the stored sources by value
    equality, so it only works on images handed back verbatim (the
    pipeline always inpaints the raw captures, which makes this exact).
    Strength, steps, and seed are accepted and ignored: the oracle has
    nothing to denoise.
    """

    def __init__(self, sources: Sequence[np.ndarray], targets: Sequence[np.ndarray]):
        if len(sources) != len(targets):
            raise ValueError("sources and targets must pair up")
        for s, t in zip(sources, targets):
            if s.shape != t.shape:
                raise DimensionMismatch(
                    f"source {s.shape} vs target {t.shape}"
                )
        self.sources = [np.asarray(s, dtype=np.float64) for s in sources]
        self.targets = [np.asarray(t, dtype=np.float64) for t in targets]

    def learn_concept(self, images, fused_masks, steps=DEFAULT_LEARN_STEPS,
                      token_count=1) -> str:
        del images, fused_masks, steps, token_count
        return "oracle"

    def inpaint(self, image, fused_mask, handle, strength,
                steps=DEFAULT_INPAINT_STEPS, seed=0) -> np.ndarray:
        _check_strength(strength)
        del handle, steps, seed
        image = np.asarray(image, dtype=np.float64)
        for src, tgt in zip(self.sources, self.targets):
            if src.shape == image.shape and np.array_equal(src, image):
                return composite(image, fused_mask, tgt)
        raise BackendError(
            "oracle backend got an image that matches no known source"
        )


def _encode_png(image: np.ndarray) -> bytes:
    data = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(data).save(buf, format="PNG")
    return buf.getvalue()


def _encode_mask_png(mask: np.ndarray) -> bytes:
    data = np.round(np.clip(mask, 0.0, 1.0) * 255.0).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(data, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def _decode_png(payload: bytes) -> np.ndarray:
    try:
        with Image.open(io.BytesIO(payload)) as im:
            return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except Exception as exc:
        raise ContractViolation(f"service returned undecodable image: {exc}") from exc


class RemoteBackend:
    """HTTP client for the companion inpainting service.

    POST /concept/learn with the training pairs, POST /inpaint per
    image. Transient failures (connection errors, 503 model-busy) are
    retried `retries` times with exponential backoff; other non-200
    statuses surface immediately as BackendError with the response
    body. Responses are contract-checked: dimensions must match and
    unmasked pixels may drift at most 2/255 from the input.

    Concurrent use is allowed; a semaphore bounds in-flight requests.
    """

    def __init__(
        self,
        endpoint_url: str,
        *,
        max_in_flight: int = 2,
        retries: int = 3,
        backoff: float = 0.5,
        timeout: float = 600.0,
    ):
        self.endpoint_url = endpoint_url.rstrip("/")
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self._gate = threading.Semaphore(max_in_flight)
        self._session = requests.Session()

    def _post(self, path: str, files, data) -> requests.Response:
        url = self.endpoint_url + path
        last_exc: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                with self._gate:
                    resp = self._session.post(
                        url, files=files, data=data, timeout=self.timeout
                    )
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_exc = exc
                log.warning("network error on %s (attempt %d): %s",
                            path, attempt + 1, exc)
                continue
            if resp.status_code == 503:  # model busy, worth retrying
                last_exc = BackendError(
                    f"protocol-error: status 503: {resp.text}"
                )
                log.warning("service busy on %s (attempt %d)", path, attempt + 1)
                continue
            if resp.status_code != 200:
                raise BackendError(
                    f"protocol-error: status {resp.status_code}: {resp.text}"
                )
            return resp
        raise BackendError(f"network-error: {path} failed after "
                           f"{self.retries + 1} attempts: {last_exc}")

    def learn_concept(self, images, fused_masks, steps=DEFAULT_LEARN_STEPS,
                      token_count=1) -> str:
        if len(images) != len(fused_masks):
            raise ValueError("images and fused_masks must pair up")
        files = []
        for i, (img, msk) in enumerate(zip(images, fused_masks)):
            files.append(("images[]", (f"view_{i:03d}.png",
                                       _encode_png(img), "image/png")))
            files.append(("fused_masks[]", (f"mask_{i:03d}.png",
                                            _encode_mask_png(msk), "image/png")))
        resp = self._post("/concept/learn", files,
                          {"steps": str(steps), "token_count": str(token_count)})
        try:
            concept_id = resp.json()["concept_id"]
        except (ValueError, KeyError) as exc:
            raise BackendError(
                f"protocol-error: bad learn response: {resp.text!r}"
            ) from exc
        return str(concept_id)

    def inpaint(self, image, fused_mask, handle, strength,
                steps=DEFAULT_INPAINT_STEPS, seed=0) -> np.ndarray:
        _check_strength(strength)
        image = np.asarray(image, dtype=np.float64)
        fused_mask = np.asarray(fused_mask, dtype=np.float64)
        files = [
            ("image", ("image.png", _encode_png(image), "image/png")),
            ("fused_mask", ("mask.png", _encode_mask_png(fused_mask), "image/png")),
        ]
        data = {
            "concept_id": handle,
            "strength": repr(float(strength)),
            "steps": str(steps),
            "seed": str(seed),
        }
        resp = self._post("/inpaint", files, data)
        result = _decode_png(resp.content)
        if result.shape != image.shape:
            raise ContractViolation(
                f"service returned shape {result.shape}, expected {image.shape}"
            )
        # quantization through two 8-bit round trips bounds honest drift
        drift = np.abs(result - image)[fused_mask == 0.0]
        if drift.size and drift.max() > UNMASKED_DRIFT_TOLERANCE + 1e-9:
            raise ContractViolation(
                f"unmasked pixels drifted by {drift.max():.4f} "
                f"(tolerance {UNMASKED_DRIFT_TOLERANCE:.4f})"
            )
        return result
