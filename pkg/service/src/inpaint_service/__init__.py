"""Concept-conditioned masked inpainting over HTTP.

The package learns a per-scene concept embedding from masked views and
serves seeded, mask-restricted denoising behind a small REST API. The
heavy lifting lives in `model` (the builtin CPU backend), `schedule`
(forward/reverse noise math) and `codec` (pixel/latent transport);
`app.create_app` wires them behind FastAPI.
"""

from .app import create_app
from .config import ServiceConfig, load_config
from .model import build_model
from .store import ConceptRecord, ConceptStore

__all__ = [
    "ConceptRecord",
    "ConceptStore",
    "ServiceConfig",
    "build_model",
    "create_app",
    "load_config",
]
