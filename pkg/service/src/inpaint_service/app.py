"""HTTP face of the service.

Endpoints:

  GET  /health         -> {status, model, concepts}
  POST /concept/learn  -> multipart images[] + fused_masks[], {concept_id}
  POST /inpaint        -> multipart image + fused_mask, PNG bytes back

Error bodies are always JSON {error, detail}. 400 covers anything
malformed in the request, 404 an unknown concept_id, 503 a busy model
(learn already in flight, or the inpaint queue at capacity), 507 an
allocation failure while learning.

Concurrency: one learn job at a time, guarded by a non-blocking lock.
Inpaint work funnels through a single worker thread fed by a bounded
FIFO queue, so requests are served strictly in arrival order and the
sixteen-deep backlog limit maps to 503 rather than unbounded memory.
"""

from __future__ import annotations

import asyncio
import io
import queue
import threading
from concurrent.futures import Future
from contextlib import asynccontextmanager
from typing import Callable

import numpy as np
from fastapi import FastAPI, Request
from fastapi.concurrency import run_in_threadpool
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from PIL import Image, UnidentifiedImageError

from .config import ServiceConfig, load_config
from .model import build_model
from .store import ConceptRecord, ConceptStore

DEFAULT_LEARN_STEPS = 3000
DEFAULT_INPAINT_STEPS = 50
INPAINT_QUEUE_LIMIT = 16


class _BadRequest(Exception):
    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


def _error(status: int, error: str, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"error": error, "detail": detail})


async def _part_bytes(part, name: str) -> bytes:
    # starlette hands back UploadFile for file parts, str for plain fields
    if part is None or not hasattr(part, "read"):
        raise _BadRequest(f"{name} must be sent as a file part")
    return await part.read()


def _decode_image(data: bytes, name: str) -> np.ndarray:
    try:
        with Image.open(io.BytesIO(data)) as img:
            rgb = img.convert("RGB")
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise _BadRequest(f"{name} is not a decodable image: {exc}")
    return np.asarray(rgb, dtype=np.float64) / 255.0


def _decode_mask(data: bytes, name: str) -> np.ndarray:
    try:
        with Image.open(io.BytesIO(data)) as img:
            gray = img.convert("L")
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise _BadRequest(f"{name} is not a decodable image: {exc}")
    return np.asarray(gray, dtype=np.float64) / 255.0


def _encode_png(image: np.ndarray) -> bytes:
    arr = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def _field_str(form, name: str) -> str | None:
    value = form.get(name)
    if value is None:
        return None
    if not isinstance(value, str):
        raise _BadRequest(f"{name} must be a plain form field")
    return value


def _field_int(form, name: str, default: int, minimum: int | None = None) -> int:
    raw = _field_str(form, name)
    if raw is None:
        return default
    try:
        value = int(raw)
    except ValueError:
        raise _BadRequest(f"{name} must be an integer, got {raw!r}")
    if minimum is not None and value < minimum:
        raise _BadRequest(f"{name} must be >= {minimum}, got {value}")
    return value


def _field_float(form, name: str) -> float:
    raw = _field_str(form, name)
    if raw is None:
        raise _BadRequest(f"{name} is required")
    try:
        return float(raw)
    except ValueError:
        raise _BadRequest(f"{name} must be a number, got {raw!r}")


def _worker(jobs: "queue.Queue[tuple[Future, Callable[[], bytes]] | None]") -> None:
    while True:
        item = jobs.get()
        if item is None:
            return
        fut, job = item
        if not fut.set_running_or_notify_cancel():
            continue
        try:
            fut.set_result(job())
        except BaseException as exc:  # surfaced via the future
            fut.set_exception(exc)


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    cfg = config or load_config()
    store = ConceptStore(cfg.store_dir)
    model = build_model(cfg.model)
    learn_gate = threading.Lock()
    jobs: queue.Queue = queue.Queue(maxsize=INPAINT_QUEUE_LIMIT)
    worker = threading.Thread(target=_worker, args=(jobs,),
                              name="inpaint-worker", daemon=True)
    worker.start()

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        jobs.put(None)

    app = FastAPI(title="inpaint-service", lifespan=lifespan)
    app.state.config = cfg
    app.state.store = store
    app.state.model = model
    app.state.jobs = jobs

    @app.exception_handler(RequestValidationError)
    async def _on_validation_error(request: Request, exc: RequestValidationError):
        return _error(400, "malformed", str(exc))

    @app.get("/health")
    async def health():
        return {"status": "ok", "model": cfg.model, "concepts": store.ids()}

    @app.post("/concept/learn")
    async def learn(request: Request):
        try:
            form = await request.form()
        except Exception as exc:
            return _error(400, "malformed", f"bad multipart body: {exc}")
        try:
            image_parts = form.getlist("images[]")
            mask_parts = form.getlist("fused_masks[]")
            if not image_parts:
                raise _BadRequest("at least one images[] part is required")
            if len(image_parts) != len(mask_parts):
                raise _BadRequest(
                    f"{len(image_parts)} images[] but "
                    f"{len(mask_parts)} fused_masks[]")
            images: list[np.ndarray] = []
            masks: list[np.ndarray] = []
            for i, (ip, mp) in enumerate(zip(image_parts, mask_parts)):
                img = _decode_image(await _part_bytes(ip, f"images[{i}]"),
                                    f"images[{i}]")
                msk = _decode_mask(await _part_bytes(mp, f"fused_masks[{i}]"),
                                   f"fused_masks[{i}]")
                if msk.shape != img.shape[:2]:
                    raise _BadRequest(
                        f"fused_masks[{i}] is {msk.shape}, image is "
                        f"{img.shape[:2]}")
                images.append(img)
                masks.append(msk)
            steps = _field_int(form, "steps", DEFAULT_LEARN_STEPS, minimum=1)
            token_count = _field_int(form, "token_count", 1, minimum=1)
        except _BadRequest as exc:
            return _error(400, "malformed", exc.detail)

        if not learn_gate.acquire(blocking=False):
            return _error(503, "model-busy", "a learn job is already running")
        try:
            embedding = await run_in_threadpool(
                model.learn, images, masks, steps, token_count)
        except MemoryError as exc:
            return _error(507, "out-of-memory", str(exc) or "allocation failed")
        finally:
            learn_gate.release()

        record = ConceptRecord(
            concept_id=store.new_id(),
            embedding=embedding,
            steps=steps,
            token_count=token_count,
            model_id=model.model_id,
        )
        store.save(record)
        return {"concept_id": record.concept_id}

    @app.post("/inpaint")
    async def inpaint(request: Request):
        try:
            form = await request.form()
        except Exception as exc:
            return _error(400, "malformed", f"bad multipart body: {exc}")
        try:
            raw_image = await _part_bytes(form.get("image"), "image")
            image = _decode_image(raw_image, "image")
            mask = _decode_mask(
                await _part_bytes(form.get("fused_mask"), "fused_mask"),
                "fused_mask")
            if mask.shape != image.shape[:2]:
                raise _BadRequest(
                    f"fused_mask is {mask.shape}, image is {image.shape[:2]}")
            concept_id = _field_str(form, "concept_id")
            if not concept_id:
                raise _BadRequest("concept_id is required")
            strength = _field_float(form, "strength")
            if not 0.0 < strength <= 1.0:
                raise _BadRequest(f"strength must be in (0, 1], got {strength}")
            steps = _field_int(form, "steps", DEFAULT_INPAINT_STEPS, minimum=1)
            seed = _field_int(form, "seed", 0)
        except _BadRequest as exc:
            return _error(400, "malformed", exc.detail)

        record = store.load(concept_id)
        if record is None:
            return _error(404, "unknown-concept",
                          f"no concept {concept_id!r} in the store")

        if not mask.any():
            # nothing to denoise; the contract asks for the input back
            # bit for bit, so return the uploaded bytes untouched
            return Response(content=raw_image, media_type="image/png")

        def job() -> bytes:
            result = model.inpaint(image, mask, record.embedding,
                                   strength, steps, seed=seed)
            return _encode_png(result)

        fut: Future = Future()
        try:
            jobs.put_nowait((fut, job))
        except queue.Full:
            return _error(503, "model-busy",
                          f"inpaint queue is at its {INPAINT_QUEUE_LIMIT}-"
                          "request capacity")
        try:
            png = await asyncio.wrap_future(fut)
        except MemoryError as exc:
            return _error(507, "out-of-memory", str(exc) or "allocation failed")
        return Response(content=png, media_type="image/png")

    return app
