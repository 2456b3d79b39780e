"""Per-frame tracker masks for dynamic distractors.

The tracker itself runs out of process; this module only consumes its
per-frame 8-bit PNG output, named to mirror the scene's images/, and
merges it with whatever static masks the dataset already carries. The
merged stack is what downstream fusion treats as the inpainting mask.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DatasetError, DimensionMismatch
from .scene import SceneDataset, load_mask, validate_mask

logger = logging.getLogger(__name__)


@dataclass
class TrackMaskSet:
    """One mask per dataset view, in view order, plus the tool that made them."""

    masks: list[np.ndarray]
    source: str = "tracker"

    def __len__(self) -> int:
        return len(self.masks)

    def __iter__(self):
        return iter(self.masks)


def ingest_track_masks(
    mask_dir: Path | str, dataset: SceneDataset, source: str = "tracker"
) -> TrackMaskSet:
    """Load tracker masks for every view of `dataset` from `mask_dir`.

    Masks are matched to views by image stem (<view name>.png). A view
    with no file gets an all-zero mask and a warning: the tracker saw no
    distractor there. A mask on the wrong pixel grid is an error.
    """
    mask_dir = Path(mask_dir)
    if not mask_dir.is_dir():
        raise DatasetError(f"track mask directory not found: {mask_dir}")
    masks = []
    for view in dataset.views:
        path = mask_dir / f"{view.name}.png"
        if path.exists():
            mask = validate_mask(load_mask(path), view.image.shape[:2], path.name)
        else:
            logger.warning(
                "no track mask for view %s; defaulting to all-zero", view.name
            )
            mask = np.zeros(view.image.shape[:2], dtype=np.float32)
        masks.append(mask)
    return TrackMaskSet(masks=masks, source=source)


def _as_mask_list(stack) -> list[np.ndarray]:
    if isinstance(stack, TrackMaskSet):
        return stack.masks
    return list(stack)


def union_masks(
    static: Sequence[np.ndarray] | TrackMaskSet,
    dynamic: Sequence[np.ndarray] | TrackMaskSet,
) -> list[np.ndarray]:
    """Per-view, per-pixel maximum of two mask stacks.

    Max (not sum) keeps values in [0, 1] where both inputs overlap, and
    makes the union commutative, idempotent, and monotone.
    """
    a = _as_mask_list(static)
    b = _as_mask_list(dynamic)
    if len(a) != len(b):
        raise DatasetError(
            f"mask stacks differ in view count: {len(a)} vs {len(b)}"
        )
    merged = []
    for i, (ma, mb) in enumerate(zip(a, b)):
        if ma.shape != mb.shape:
            raise DimensionMismatch(
                f"view {i}: mask shapes differ, {ma.shape} vs {mb.shape}"
            )
        merged.append(np.maximum(ma, mb).astype(np.float32))
    return merged
