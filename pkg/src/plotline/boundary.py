"""Plot-boundary detection over chapter embedding sequences.

A chapter ends an episode when the step distance to the next chapter
exceeds a threshold derived from the mean step distance of the recent
lookback window, scaled by beta. After a detection, scanning is suspended
for the safety distance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyGrid, IndexOutOfRange

DEFAULT_ALPHA = 5
DEFAULT_BETA = 1.5
DEFAULT_SAFETY_DISTANCE = 3

DEFAULT_BETA_GRID = tuple(round(0.5 + 0.1 * i, 10) for i in range(26))  # 0.5 .. 3.0


@dataclass
class EmbeddingSequence:
    book_id: str
    embeddings: np.ndarray  # (n_chapters, d), row m-1 is chapter m

    def __post_init__(self):
        self.embeddings = np.asarray(self.embeddings, dtype=np.float64)
        if self.embeddings.ndim != 2 or self.embeddings.shape[0] < 1:
            raise ValueError("embeddings must be a nonempty 2-D array")

    def __len__(self) -> int:
        return self.embeddings.shape[0]


@dataclass
class BoundaryConfig:
    alpha: int = DEFAULT_ALPHA               # lookback window, chapters
    beta: float = DEFAULT_BETA               # threshold multiplier
    safety_distance: int = DEFAULT_SAFETY_DISTANCE
    embedding_space: str = "full"            # "full" | "projected-2d"

    def __post_init__(self):
        if self.alpha < 1:
            raise ValueError("alpha must be >= 1")
        if self.beta <= 0:
            raise ValueError("beta must be > 0")
        if self.safety_distance < 0:
            raise ValueError("safety_distance must be >= 0")
        if self.embedding_space not in ("full", "projected-2d"):
            raise ValueError(f"unknown embedding_space {self.embedding_space!r}")


@dataclass
class PlotSegment:
    segment_index: int   # 1-based
    start_chapter: int   # inclusive
    end_chapter: int     # inclusive

    @property
    def chapter_count(self) -> int:
        return self.end_chapter - self.start_chapter + 1


def embedding_unit(seq: EmbeddingSequence, m: int) -> float:
    """Step distance EU(c_m): Euclidean distance from chapter m-1 to chapter m."""
    if not 2 <= m <= len(seq):
        raise IndexOutOfRange(f"chapter {m} outside [2, {len(seq)}]")
    return float(np.linalg.norm(seq.embeddings[m - 1] - seq.embeddings[m - 2]))


def threshold(seq: EmbeddingSequence, m: int, config: BoundaryConfig) -> float:
    """Adaptive threshold: beta times the mean step distance over the lookback
    window of steps ending at chapter m (window truncates at the sequence start)."""
    if m < 2:
        raise IndexOutOfRange(f"threshold needs m >= 2, got {m}")
    lo = max(2, m - config.alpha + 1)
    window = [embedding_unit(seq, k) for k in range(lo, m + 1)]
    return config.beta * float(np.mean(window))


def detect_boundaries(seq: EmbeddingSequence, config: BoundaryConfig) -> list[int]:
    """Per-chapter labels (1 = chapter ends a segment).

    Scans m upward from alpha+1; chapter m is a boundary when the next step
    EU(c_{m+1}) strictly exceeds the windowed threshold at m. A detection
    suspends scanning until m + safety_distance. The final chapter is always
    labeled 1 so segments cover the book.
    """
    n = len(seq)
    if n < 2:
        return [1] * n
    labels = [0] * n
    m = config.alpha + 1
    while m <= n - 1:
        if embedding_unit(seq, m + 1) > threshold(seq, m, config):
            labels[m - 1] = 1
            m += max(config.safety_distance, 1)
        else:
            m += 1
    labels[n - 1] = 1
    return labels


def boundary_chapters(labels: list[int], include_final: bool = False) -> list[int]:
    """Chapter indices labeled 1. The forced final-chapter label is dropped by
    default: it closes the book rather than marking a detected transition."""
    n = len(labels)
    return [m for m in range(1, n + 1) if labels[m - 1] and (include_final or m < n)]


def segments_from_labels(labels: list[int]) -> list[PlotSegment]:
    """Cut after every 1-label; contiguous segments jointly covering [1, n]."""
    segments = []
    start = 1
    for m, label in enumerate(labels, start=1):
        if label not in (0, 1):
            raise ValueError(f"label at chapter {m} must be 0 or 1, got {label!r}")
        if label == 1 or m == len(labels):
            segments.append(PlotSegment(len(segments) + 1, start, m))
            start = m + 1
    return segments


def calibrate_beta(
    labeled: list[tuple[EmbeddingSequence, list[int]]],
    config: BoundaryConfig | None = None,
    grid: tuple[float, ...] = DEFAULT_BETA_GRID,
    window: int = 1,
) -> float:
    """Grid-search beta maximizing mean windowed boundary F1 over labeled
    sequences (the detection rule is non-differentiable, so no gradients).
    Ties resolve to the smallest beta."""
    from .evaluation import boundary_prf

    if not grid:
        raise EmptyGrid("beta grid is empty")
    if not labeled:
        raise ValueError("need at least one labeled sequence")
    base = config or BoundaryConfig()
    best_beta, best_f1 = None, -1.0
    for beta in sorted(grid):
        cfg = BoundaryConfig(
            alpha=base.alpha,
            beta=beta,
            safety_distance=base.safety_distance,
            embedding_space=base.embedding_space,
        )
        f1s = []
        for seq, gold in labeled:
            pred = boundary_chapters(detect_boundaries(seq, cfg))
            _, _, f1, _ = boundary_prf(pred, gold, window)
            f1s.append(f1)
        mean_f1 = float(np.mean(f1s))
        if mean_f1 > best_f1:
            best_beta, best_f1 = beta, mean_f1
    return best_beta


def segments_record(
    book_id: str, labels: list[int], segments: list[PlotSegment], config: BoundaryConfig
) -> dict:
    """JSON-export form of one book's detection result."""
    return {
        "book_id": book_id,
        "labels": labels,
        "segments": [{"start": s.start_chapter, "end": s.end_chapter} for s in segments],
        "config": {
            "alpha": config.alpha,
            "beta": config.beta,
            "d_d": config.safety_distance,
        },
    }
