"""Delimited reports and diagnostic figures for runs and studies.

Everything here writes files and returns paths; nothing draws to a
screen. Figures go through the Agg canvas so headless runs work.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .pipeline import PipelineReport  # noqa: E402
from .scene import save_image  # noqa: E402

HEATMAP_CMAP = "inferno"


def write_csv(path: Path | str, header: Sequence[str],
              rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def save_heatmap(path: Path | str, values: np.ndarray) -> Path:
    """Write a [0, 1] scalar map as a colormapped 8-bit PNG."""
    path = Path(path)
    values = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    rgba = matplotlib.colormaps[HEATMAP_CMAP](values)
    save_image(path, rgba[..., :3])
    return path


def pipeline_csv(path: Path | str, report: PipelineReport) -> Path:
    """One row per stage: the initial fit, then each cycle.

    The lpips/fid columns stay empty; they are for values computed by
    external tooling and merged into the same table.
    """
    rows = [["initial", "", "", f"{report.initial_train_psnr:.4f}",
             _fmt(report.initial_holdout_psnr), "", ""]]
    for c in report.cycles:
        rows.append([
            str(c.index), f"{c.theta:.4f}", f"{c.strength:.4f}",
            f"{c.train_psnr:.4f}", _fmt(c.holdout_psnr), "", "",
        ])
    return write_csv(
        path,
        ["cycle", "theta", "strength", "train_psnr", "holdout_psnr",
         "lpips", "fid"],
        rows,
    )


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.4f}"


def pipeline_figure(path: Path | str, report: PipelineReport) -> Path:
    """Training/held-out PSNR over cycles, with the schedules beneath."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ks = [0] + [c.index for c in report.cycles]
    train = [report.initial_train_psnr] + [c.train_psnr for c in report.cycles]
    held = [report.initial_holdout_psnr] + [
        c.holdout_psnr for c in report.cycles
    ]

    fig, (ax, ax2) = plt.subplots(
        2, 1, figsize=(6.0, 5.0), sharex=True,
        gridspec_kw={"height_ratios": [2.2, 1.0]},
    )
    ax.plot(ks, train, "o-", label="train")
    if all(h is not None for h in held):
        ax.plot(ks, held, "s--", label="held-out")
    ax.set_ylabel("PSNR (dB)")
    ax.legend()
    ax.grid(True, alpha=0.3)

    ck = [c.index for c in report.cycles]
    ax2.step(ck, [c.theta for c in report.cycles], where="mid",
             label="mask trust")
    ax2.step(ck, [c.strength for c in report.cycles], where="mid",
             label="noise strength")
    ax2.set_xlabel("cycle (0 = initial fit)")
    ax2.set_ylim(-0.05, 1.05)
    ax2.legend()
    ax2.grid(True, alpha=0.3)

    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def sparsity_csv(path: Path | str,
                 rows: Sequence[tuple[int, float, float]]) -> Path:
    return write_csv(
        path, ["interval", "psnr", "ssim", "lpips", "fid"],
        [[str(s), f"{p:.4f}", f"{m:.6f}", "", ""] for s, p, m in rows],
    )


def sparsity_figure(path: Path | str,
                    rows: Sequence[tuple[int, float, float]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = sorted(rows)
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    ax.plot([r[0] for r in rows], [r[1] for r in rows], "o-")
    ax.set_xlabel("view sampling interval")
    ax.set_ylabel("PSNR vs dense reference (dB)")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def metrics_csv(path: Path | str,
                rows: Sequence[tuple[str, float, float]]) -> Path:
    """Per-view scores plus a mean row. Empty lpips/fid columns are
    placeholders for externally computed perceptual metrics."""
    body = [[n, f"{p:.4f}", f"{s:.6f}", "", ""] for n, p, s in rows]
    if rows:
        body.append([
            "mean",
            f"{np.mean([r[1] for r in rows]):.4f}",
            f"{np.mean([r[2] for r in rows]):.6f}", "", "",
        ])
    return write_csv(path, ["view", "psnr", "ssim", "lpips", "fid"], body)


def training_log_csv(path: Path | str, log) -> Path:
    return write_csv(
        path, ["iteration", "loss", "psnr", "num_splats"],
        [[e.iteration, f"{e.loss:.6f}", f"{e.psnr:.4f}", e.num_splats]
         for e in log],
    )
