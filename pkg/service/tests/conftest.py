import io

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from inpaint_service.app import create_app
from inpaint_service.config import ServiceConfig


def make_image(seed: int, h: int = 48, w: int = 40) -> np.ndarray:
    """Deterministic float RGB test card: smooth gradient plus a block."""
    yy, xx = np.meshgrid(np.linspace(0, 1, h), np.linspace(0, 1, w),
                         indexing="ij")
    rng = np.random.default_rng(seed)
    base = np.stack([0.2 + 0.6 * xx, 0.3 + 0.5 * yy, 0.5 + 0.3 * xx * yy],
                    axis=-1)
    base[h // 4: h // 2, w // 4: w // 2] = rng.uniform(0.1, 0.9, size=3)
    return np.clip(base, 0.0, 1.0)


def png_bytes(image: np.ndarray) -> bytes:
    arr = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def mask_bytes(mask: np.ndarray) -> bytes:
    arr = np.clip(np.rint(mask * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as img:
        return np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0


def box_mask(h: int = 48, w: int = 40, frac: float = 0.3) -> np.ndarray:
    mask = np.zeros((h, w))
    dy, dx = int(h * frac), int(w * frac)
    mask[h // 2 - dy // 2: h // 2 + dy // 2,
         w // 2 - dx // 2: w // 2 + dx // 2] = 1.0
    return mask


@pytest.fixture()
def store_dir(tmp_path):
    return tmp_path / "concepts"


@pytest.fixture()
def client(store_dir):
    app = create_app(ServiceConfig(store_dir=store_dir))
    with TestClient(app) as c:
        yield c


def learn_quick(client, n: int = 2, steps: int = 3) -> str:
    """Register a tiny concept and return its id."""
    files = []
    for i in range(n):
        files.append(("images[]", (f"v{i}.png", png_bytes(make_image(i)),
                                   "image/png")))
        files.append(("fused_masks[]", (f"m{i}.png", mask_bytes(box_mask()),
                                        "image/png")))
    resp = client.post("/concept/learn", files=files,
                       data={"steps": str(steps)})
    assert resp.status_code == 200, resp.text
    return resp.json()["concept_id"]
