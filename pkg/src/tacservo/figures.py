"""Matplotlib figure emission for the report path.

Every CLI command that writes delimited output also drops a rendered PNG
next to it: trace overlays, training-loss curves, prediction scatter and
tactile image previews.  Headless backend; nothing here is needed by the
library's numeric paths (the SVG overlay in scoring stays dependency-free).
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .contours import Contour
from .servo import Trajectory
from .tactsim import TactileImage


def save_trace_figure(traj: Trajectory, contour: Contour, path: str | Path) -> None:
    n = 720
    cpts = np.array([contour.point_at(contour.perimeter * i / n) for i in range(n + 1)])
    ppts = np.array([(e.command.x, e.command.y) for e in traj.entries])
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot(cpts[:, 0], cpts[:, 1], color="0.6", lw=1.0, label="contour")
    if len(ppts):
        ax.plot(ppts[:, 0], ppts[:, 1], color="crimson", lw=1.2, label="commanded path")
        ax.plot(ppts[0, 0], ppts[0, 1], "o", mfc="none", mec="green", ms=9, label="start")
    ax.set_aspect("equal")
    ax.set_xlabel("x [mm]")
    ax.set_ylabel("y [mm]")
    ax.set_title(f"{traj.task} / {contour.kind} / {traj.status}")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_loss_figure(loss_history: list[float], path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.semilogy(np.arange(1, len(loss_history) + 1), loss_history, lw=1.2)
    ax.set_xlabel("epoch")
    ax.set_ylabel("train MSE (normalized)")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_scatter_figure(
    truths: np.ndarray, preds: np.ndarray, names: tuple[str, ...], path: str | Path
) -> None:
    """Predicted-vs-true scatter, one panel per output."""
    k = truths.shape[1]
    fig, axes = plt.subplots(1, k, figsize=(4 * k, 3.6))
    if k == 1:
        axes = [axes]
    for j, ax in enumerate(axes):
        ax.plot(truths[:, j], preds[:, j], ".", ms=2, alpha=0.5)
        lo = min(truths[:, j].min(), preds[:, j].min())
        hi = max(truths[:, j].max(), preds[:, j].max())
        ax.plot([lo, hi], [lo, hi], "k--", lw=0.8)
        ax.set_xlabel(f"true {names[j]}")
        ax.set_ylabel(f"predicted {names[j]}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_image_figure(image: TactileImage, path: str | Path, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.imshow(image.pixels, cmap="gray", vmin=0.0, vmax=1.0, interpolation="nearest")
    ax.set_xticks([])
    ax.set_yticks([])
    if title:
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
