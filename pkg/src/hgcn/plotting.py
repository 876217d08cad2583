"""Figures for training runs and sweeps, written straight to image files."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def training_curves(history: Sequence[dict], path: str | Path, title: str = "") -> Path:
    """Loss and mAP per epoch, one line per split."""
    by_split: dict[str, list[dict]] = defaultdict(list)
    for row in history:
        by_split[row["split"]].append(row)
    fig, (ax_loss, ax_map) = plt.subplots(1, 2, figsize=(9, 3.5))
    for split_name, rows in sorted(by_split.items()):
        epochs = [r["epoch"] + 1 for r in rows]
        ax_loss.plot(epochs, [r["loss"] for r in rows], marker="o", ms=3, label=split_name)
        ax_map.plot(epochs, [r["map"] for r in rows], marker="o", ms=3, label=split_name)
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("loss")
    ax_map.set_xlabel("epoch")
    ax_map.set_ylabel("mAP")
    ax_map.set_ylim(0, 1.02)
    for ax in (ax_loss, ax_map):
        ax.grid(alpha=0.3)
        ax.legend()
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def sweep_curve(rows: Sequence[dict], path: str | Path, metric: str = "map") -> Path:
    """Mean with a one-std band per hyperparameter value."""
    grouped: dict[str, dict[int, list[float]]] = defaultdict(lambda: defaultdict(list))
    for row in rows:
        grouped[row["hyper"]][int(row["value"])].append(float(row[metric]))
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for hyper, cells in sorted(grouped.items()):
        values = sorted(cells)
        mean = np.array([np.mean(cells[v]) for v in values])
        std = np.array([np.std(cells[v]) for v in values])
        ax.errorbar(values, mean, yerr=std, marker="o", capsize=3, label=hyper)
    ax.set_xlabel("value")
    ax.set_ylabel(metric)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
