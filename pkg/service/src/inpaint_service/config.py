"""Environment-driven configuration.

INPAINT_MODEL  which backend to load (default the built-in CPU model;
               deployments with a real diffusion checkpoint point this
               at their registered backend name)
INPAINT_DEVICE compute device hint passed to the backend ("cpu")
INPAINT_PORT   HTTP port (8787)
INPAINT_STORE  concept store directory ("./concepts")
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class ServiceConfig:
    model: str = "builtin:tiny"
    device: str = "cpu"
    port: int = 8787
    store_dir: Path = Path("concepts")


def load_config() -> ServiceConfig:
    return ServiceConfig(
        model=os.environ.get("INPAINT_MODEL", ServiceConfig.model),
        device=os.environ.get("INPAINT_DEVICE", ServiceConfig.device),
        port=int(os.environ.get("INPAINT_PORT", ServiceConfig.port)),
        store_dir=Path(os.environ.get("INPAINT_STORE",
                                      str(ServiceConfig.store_dir))),
    )
