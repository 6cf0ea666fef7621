"""Matplotlib renderings of stage artifacts.

Every function writes a PNG next to the delimited artifact it illustrates.
The Agg backend is forced and the Software metadata chunk dropped so repeated
runs produce identical bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

DPI = 100
_SAVE_KWARGS = {"dpi": DPI, "metadata": {"Software": None}}


def save_loss_curve(losses: list[float], path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(1, len(losses) + 1), losses, color="tab:blue")
    ax.set_xlabel("epoch")
    ax.set_ylabel("summed reconstruction loss")
    ax.set_title("Training loss")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def save_embedding_scatter(
    points: np.ndarray,
    book_id: str,
    path: str | Path,
    boundary_chapters: list[int] | None = None,
) -> None:
    """2-D chapter embeddings in reading order; boundary chapters ringed."""
    points = np.asarray(points, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(6, 5))
    n = points.shape[0]
    ax.plot(points[:, 0], points[:, 1], color="0.8", linewidth=0.8, zorder=1)
    ax.scatter(
        points[:, 0], points[:, 1],
        c=np.arange(1, n + 1), cmap="viridis", s=30, zorder=2,
    )
    if boundary_chapters:
        idx = [b - 1 for b in boundary_chapters if 1 <= b <= n]
        ax.scatter(
            points[idx, 0], points[idx, 1],
            facecolors="none", edgecolors="red", s=120, zorder=3,
        )
    ax.set_xlabel("component 1")
    ax.set_ylabel("component 2")
    ax.set_title(f"{book_id}: chapter embeddings")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def save_boundary_plot(
    steps: list[float],
    thresholds: list[float | None],
    detected: list[int],
    book_id: str,
    path: str | Path,
) -> None:
    """Step-distance series (x = chapter m, EU between m-1 and m) with the
    threshold curve and detected boundaries."""
    fig, ax = plt.subplots(figsize=(8, 4))
    xs = list(range(2, len(steps) + 2))
    ax.plot(xs, steps, color="tab:blue", label="step distance")
    thr_x = [x for x, t in zip(xs, thresholds) if t is not None]
    thr_y = [t for t in thresholds if t is not None]
    if thr_x:
        ax.plot(thr_x, thr_y, color="tab:orange", linestyle="--", label="threshold")
    for b in detected:
        ax.axvline(b, color="red", alpha=0.4, linewidth=1)
    ax.set_xlabel("chapter")
    ax.set_ylabel("distance")
    ax.set_title(f"{book_id}: boundary detection")
    ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def save_metric_bars(book_ids: list[str], f1s: list[float], path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(book_ids)), 4))
    ax.bar(range(len(book_ids)), f1s, color="tab:green")
    ax.set_xticks(range(len(book_ids)))
    ax.set_xticklabels(book_ids, rotation=30, ha="right")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("windowed F1")
    ax.set_title("Boundary F1 per book")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)
