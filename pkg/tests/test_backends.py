"""Inpainting backends: mocks, the hard composite, and the HTTP client.

The remote tests run against a scripted in-process HTTP server so the
retry, protocol-error, and contract-validation paths are exercised for
real (multipart parsing included) without any external service.
"""

import email
import email.policy
import io
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest
from PIL import Image

from splatpaint.backends import (
    IdentityBackend,
    OracleBackend,
    RemoteBackend,
    composite,
)
from splatpaint.errors import BackendError, ContractViolation


def small_image(rng, size=6):
    return rng.uniform(0.1, 0.9, size=(size, size, 3))


def checker_mask(size=6):
    mask = np.zeros((size, size))
    mask[::2, ::2] = 1.0
    return mask


class TestComposite:
    def test_unmasked_pixels_come_from_the_input(self, rng):
        img = small_image(rng)
        filled = small_image(rng)
        mask = checker_mask()
        out = composite(img, mask, filled)
        np.testing.assert_array_equal(out[mask == 0.0], img[mask == 0.0])
        np.testing.assert_array_equal(out[mask == 1.0], filled[mask == 1.0])

    def test_fractional_mask_blends(self, rng):
        img = np.zeros((2, 2, 3))
        filled = np.ones((2, 2, 3))
        out = composite(img, np.full((2, 2), 0.25), filled)
        np.testing.assert_allclose(out, 0.25, rtol=1e-15)

    def test_rejects_shape_mismatch(self, rng):
        img = small_image(rng)
        with pytest.raises(ContractViolation):
            composite(img, checker_mask(), img[:-1])


class TestIdentityBackend:
    def test_returns_input_unchanged(self, rng):
        backend = IdentityBackend()
        handle = backend.learn_concept([small_image(rng)], [checker_mask()])
        img = small_image(rng)
        out = backend.inpaint(img, checker_mask(), handle, 1.0)
        np.testing.assert_array_equal(out, img)
        out[0, 0, 0] = -1.0  # must be a copy
        assert img[0, 0, 0] != -1.0

    def test_rejects_bad_strength(self, rng):
        with pytest.raises(ValueError, match="strength"):
            IdentityBackend().inpaint(small_image(rng), checker_mask(),
                                      "identity", 0.0)


class TestOracleBackend:
    def test_substitutes_known_target_under_mask(self, rng):
        src = small_image(rng)
        tgt = small_image(rng)
        backend = OracleBackend([src], [tgt])
        mask = checker_mask()
        out = backend.inpaint(src, mask, "oracle", 1.0)
        np.testing.assert_array_equal(out[mask == 0.0], src[mask == 0.0])
        np.testing.assert_array_equal(out[mask == 1.0], tgt[mask == 1.0])

    def test_matches_the_right_source(self, rng):
        srcs = [small_image(rng) for _ in range(3)]
        tgts = [small_image(rng) for _ in range(3)]
        backend = OracleBackend(srcs, tgts)
        out = backend.inpaint(srcs[2], np.ones((6, 6)), "oracle", 1.0)
        np.testing.assert_array_equal(out, tgts[2])

    def test_unknown_image_is_an_error(self, rng):
        backend = OracleBackend([small_image(rng)], [small_image(rng)])
        with pytest.raises(BackendError, match="no known source"):
            backend.inpaint(small_image(rng), checker_mask(), "oracle", 1.0)

    def test_rejects_mismatched_pairs(self, rng):
        with pytest.raises(ValueError):
            OracleBackend([small_image(rng)], [])


def _parse_multipart(content_type: str, body: bytes):
    """Return ({field: value}, {field: [file bytes]}) from a multipart body."""
    msg = email.message_from_bytes(
        f"Content-Type: {content_type}\r\n\r\n".encode() + body,
        policy=email.policy.HTTP,
    )
    fields: dict[str, str] = {}
    files: dict[str, list[bytes]] = {}
    for part in msg.iter_parts():
        name = part.get_param("name", header="content-disposition")
        payload = part.get_payload(decode=True)
        if part.get_filename() is None:
            fields[name] = payload.decode()
        else:
            files.setdefault(name, []).append(payload)
    return fields, files


def _png_to_array(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def _array_to_png(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    data = np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(data).save(buf, format="PNG")
    return buf.getvalue()


class _ScriptedHandler(BaseHTTPRequestHandler):
    """Replays a per-path script of (status, make_body) actions."""

    script = None  # {path: [(status, callable(fields, files) -> bytes)]}
    hits = None  # {path: int}

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        body = self.rfile.read(length)
        path_script = self.script.get(self.path, [])
        idx = min(self.hits[self.path], len(path_script) - 1)
        self.hits[self.path] += 1
        status, maker = path_script[idx]
        fields, files = _parse_multipart(self.headers["Content-Type"], body)
        payload = maker(fields, files)
        self.send_response(status)
        ctype = "image/png" if payload[:4] == b"\x89PNG" else "application/json"
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_server():
    """Yields (base_url, configure) where configure(script) arms the
    handler and returns the per-path hit counters."""
    server = ThreadingHTTPServer(("127.0.0.1", 0), _ScriptedHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()

    def configure(script):
        _ScriptedHandler.script = script
        _ScriptedHandler.hits = {path: 0 for path in script}
        return _ScriptedHandler.hits

    yield f"http://127.0.0.1:{server.server_address[1]}", configure
    server.shutdown()
    server.server_close()


def _busy(fields, files):
    return json.dumps({"error": "model-busy", "detail": "try later"}).encode()


def _echo_image(fields, files):
    return files["image"][0]


class TestRemoteBackend:
    def test_learn_concept_round_trip(self, stub_server, rng):
        url, configure = stub_server
        seen = {}

        def learn_ok(fields, files):
            seen.update(fields)
            seen["n_images"] = len(files["images[]"])
            seen["n_masks"] = len(files["fused_masks[]"])
            return json.dumps({"concept_id": "c-17"}).encode()

        configure({"/concept/learn": [(200, learn_ok)]})
        backend = RemoteBackend(url, backoff=0.01)
        images = [small_image(rng) for _ in range(3)]
        masks = [checker_mask() for _ in range(3)]
        handle = backend.learn_concept(images, masks, steps=1234, token_count=2)
        assert handle == "c-17"
        assert seen["steps"] == "1234"
        assert seen["token_count"] == "2"
        assert seen["n_images"] == 3 and seen["n_masks"] == 3

    def test_inpaint_echo_satisfies_contract(self, stub_server, rng):
        url, configure = stub_server
        configure({"/inpaint": [(200, _echo_image)]})
        backend = RemoteBackend(url, backoff=0.01)
        img = small_image(rng)
        out = backend.inpaint(img, np.zeros((6, 6)), "c-17", 1.0, seed=5)
        # one 8-bit round trip each way stays inside the 2/255 tolerance
        assert np.abs(out - img).max() <= 2.0 / 255.0 + 1e-9

    def test_retries_through_busy_responses(self, stub_server, rng):
        url, configure = stub_server
        hits = configure({"/inpaint": [(503, _busy), (503, _busy),
                                       (200, _echo_image)]})
        backend = RemoteBackend(url, backoff=0.01)
        img = small_image(rng)
        backend.inpaint(img, np.zeros((6, 6)), "c", 1.0)
        assert hits["/inpaint"] == 3

    def test_persistent_busy_exhausts_retries(self, stub_server, rng):
        url, configure = stub_server
        hits = configure({"/inpaint": [(503, _busy)]})
        backend = RemoteBackend(url, retries=2, backoff=0.01)
        with pytest.raises(BackendError, match="network-error"):
            backend.inpaint(small_image(rng), np.zeros((6, 6)), "c", 1.0)
        assert hits["/inpaint"] == 3  # initial + 2 retries

    def test_client_error_is_not_retried(self, stub_server, rng):
        url, configure = stub_server

        def bad_request(fields, files):
            return json.dumps({"error": "malformed",
                               "detail": "missing concept_id"}).encode()

        hits = configure({"/inpaint": [(400, bad_request)]})
        backend = RemoteBackend(url, backoff=0.01)
        with pytest.raises(BackendError, match="status 400.*missing concept_id"):
            backend.inpaint(small_image(rng), np.zeros((6, 6)), "c", 1.0)
        assert hits["/inpaint"] == 1

    def test_unreachable_endpoint_is_a_network_error(self, rng):
        backend = RemoteBackend("http://127.0.0.1:1", retries=1, backoff=0.01)
        with pytest.raises(BackendError, match="network-error"):
            backend.inpaint(small_image(rng), np.zeros((6, 6)), "c", 1.0)

    def test_wrong_dimensions_violate_contract(self, stub_server, rng):
        url, configure = stub_server

        def shrunk(fields, files):
            return _array_to_png(_png_to_array(files["image"][0])[:-1])

        configure({"/inpaint": [(200, shrunk)]})
        backend = RemoteBackend(url, backoff=0.01)
        with pytest.raises(ContractViolation, match="shape"):
            backend.inpaint(small_image(rng), np.zeros((6, 6)), "c", 1.0)

    def test_unmasked_drift_violates_contract(self, stub_server, rng):
        url, configure = stub_server

        def drifted(fields, files):
            arr = _png_to_array(files["image"][0])
            return _array_to_png(np.clip(arr + 0.1, 0.0, 1.0))

        configure({"/inpaint": [(200, drifted)]})
        backend = RemoteBackend(url, backoff=0.01)
        with pytest.raises(ContractViolation, match="drifted"):
            backend.inpaint(small_image(rng), np.zeros((6, 6)), "c", 1.0)

    def test_drift_under_full_mask_is_allowed(self, stub_server, rng):
        url, configure = stub_server

        def drifted(fields, files):
            arr = _png_to_array(files["image"][0])
            return _array_to_png(np.clip(arr + 0.3, 0.0, 1.0))

        configure({"/inpaint": [(200, drifted)]})
        backend = RemoteBackend(url, backoff=0.01)
        out = backend.inpaint(small_image(rng), np.ones((6, 6)), "c", 1.0)
        assert out.shape == (6, 6, 3)

    def test_bad_learn_response_is_a_protocol_error(self, stub_server, rng):
        url, configure = stub_server
        configure({"/concept/learn": [(200, lambda f, g: b"not json")]})
        backend = RemoteBackend(url, backoff=0.01)
        with pytest.raises(BackendError, match="bad learn response"):
            backend.learn_concept([small_image(rng)], [checker_mask()])
