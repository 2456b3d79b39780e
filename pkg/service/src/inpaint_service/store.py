"""Durable concept records: one .npz per concept under the store
directory, holding the embeddings plus the training config. Restarting
the service rediscovers everything by listing the directory."""

from __future__ import annotations

import json
import uuid
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class ConceptRecord:
    concept_id: str
    embedding: np.ndarray
    steps: int
    token_count: int
    model_id: str


class ConceptStore:
    def __init__(self, root: Path | str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, concept_id: str) -> Path:
        return self.root / f"{concept_id}.npz"

    def new_id(self) -> str:
        return uuid.uuid4().hex[:12]

    def save(self, record: ConceptRecord) -> None:
        meta = {"concept_id": record.concept_id, "steps": record.steps,
                "token_count": record.token_count,
                "model_id": record.model_id}
        np.savez(self._path(record.concept_id),
                 embedding=record.embedding,
                 meta=np.frombuffer(json.dumps(meta).encode(),
                                    dtype=np.uint8))

    def load(self, concept_id: str) -> ConceptRecord | None:
        path = self._path(concept_id)
        if not path.exists():
            return None
        with np.load(path) as data:
            meta = json.loads(bytes(data["meta"]).decode())
            return ConceptRecord(
                concept_id=meta["concept_id"],
                embedding=data["embedding"],
                steps=int(meta["steps"]),
                token_count=int(meta["token_count"]),
                model_id=meta["model_id"],
            )

    def ids(self) -> list[str]:
        return sorted(p.stem for p in self.root.glob("*.npz"))
