"""Boundary scoring, rank correlation, and report emission."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import IoFailure, MismatchedItems


@dataclass
class BoundaryReference:
    book_id: str
    boundaries: list[int]  # sorted, unique gold boundary chapter indices

    @classmethod
    def from_file(cls, path: str | Path) -> "BoundaryReference":
        with open(path, encoding="utf-8") as fh:
            record = json.load(fh)
        boundaries = sorted(set(int(b) for b in record["boundaries"]))
        return cls(book_id=record["book_id"], boundaries=boundaries)


@dataclass
class BookMetrics:
    book_id: str
    precision: float
    recall: float
    f1: float
    accuracy: float
    tau: float | None = None


@dataclass
class MetricReport:
    window: int
    books: list[BookMetrics] = field(default_factory=list)

    def macro(self, name: str) -> float:
        values = [getattr(b, name) for b in self.books if getattr(b, name) is not None]
        return sum(values) / len(values) if values else float("nan")


def _match_boundaries(pred: Sequence[int], gold: Sequence[int], window: int) -> int:
    """Maximum one-to-one matching size under |p - g| <= window.

    Both lists sorted; each prediction takes the earliest unmatched compatible
    gold index, which is optimal because compatibility sets are intervals.
    """
    gold_sorted = sorted(gold)
    matched = 0
    gi = 0
    for p in sorted(pred):
        while gi < len(gold_sorted) and gold_sorted[gi] < p - window:
            gi += 1
        if gi < len(gold_sorted) and gold_sorted[gi] <= p + window:
            matched += 1
            gi += 1
    return matched


def boundary_prf(
    pred: Sequence[int], gold: Sequence[int], window: int = 1
) -> tuple[float, float, float, float]:
    """(precision, recall, f1, accuracy) with a +/-window tolerance.

    accuracy = matches / max(|pred|, |gold|); two empty sets score 1 across
    the board.
    """
    if window < 0:
        raise ValueError("window must be >= 0")
    if not pred and not gold:
        return (1.0, 1.0, 1.0, 1.0)
    matches = _match_boundaries(pred, gold, window)
    precision = matches / len(pred) if pred else 0.0
    recall = matches / len(gold) if gold else 0.0
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    accuracy = matches / max(len(pred), len(gold))
    return (precision, recall, f1, accuracy)


def kendall_tau(a: Sequence, b: Sequence) -> float:
    """Kendall tau-a between two strict rankings of the same items."""
    if len(a) < 2:
        raise MismatchedItems("rankings need at least 2 items")
    if len(set(a)) != len(a) or len(set(b)) != len(b) or set(a) != set(b):
        raise MismatchedItems("inputs must be permutations of the same item set")
    position_b = {item: i for i, item in enumerate(b)}
    ranks = [position_b[item] for item in a]
    n = len(ranks)
    concordant = discordant = 0
    for i in range(n):
        for j in range(i + 1, n):
            if ranks[j] > ranks[i]:
                concordant += 1
            else:
                discordant += 1
    return (concordant - discordant) / (n * (n - 1) / 2)


@dataclass
class CriterionResult:
    criterion: str
    answer: str        # "yes" | "no" | "unparseable"
    raw_response: str
    flagged: bool = False


def checkeval_readability(
    outline_text: str,
    llm,
    checklist: Sequence[str],
    template: str | None = None,
) -> tuple[list[CriterionResult], float]:
    """Ask one yes/no question per checklist criterion about the outline.

    Returns the per-criterion results (raw responses retained) and the
    fraction answered yes; unparseable answers score 0 and are flagged.
    """
    if not checklist:
        raise ValueError("checklist must be nonempty")
    if template is None:
        from .summarize import load_template
        template = load_template("checkeval")
    results = []
    yes_count = 0
    for criterion in checklist:
        prompt = template.format(outline=outline_text, criterion=criterion)
        raw = llm.complete(prompt)
        token = raw.strip().split()[0].strip(".,!:;").lower() if raw.strip() else ""
        if token in ("yes", "是"):
            results.append(CriterionResult(criterion, "yes", raw))
            yes_count += 1
        elif token in ("no", "否"):
            results.append(CriterionResult(criterion, "no", raw))
        else:
            results.append(CriterionResult(criterion, "unparseable", raw, flagged=True))
    return results, yes_count / len(checklist)


def segment_order_tau(
    pred_segments: Sequence[tuple[int, int]],
    gold_boundaries: Sequence[int],
    n_chapters: int,
) -> float | None:
    """Kendall tau between predicted and reference segment orderings.

    Each predicted segment maps to the reference segment it overlaps most
    (ties to the earlier one). The statistic needs the mapping to be a
    bijection over at least 2 segments; otherwise None.
    """
    gold_segments = []
    start = 1
    for b in sorted(gold_boundaries):
        if start <= b:
            gold_segments.append((start, b))
            start = b + 1
    if start <= n_chapters:
        gold_segments.append((start, n_chapters))
    if len(pred_segments) != len(gold_segments) or len(gold_segments) < 2:
        return None
    induced = []
    for ps, pe in pred_segments:
        overlaps = [
            (min(pe, ge) - max(ps, gs) + 1, gi)
            for gi, (gs, ge) in enumerate(gold_segments, start=1)
        ]
        induced.append(max(overlaps, key=lambda t: (t[0], -t[1]))[1])
    if len(set(induced)) != len(induced):
        return None
    return kendall_tau(list(range(1, len(gold_segments) + 1)), induced)


REPORT_COLUMNS = ("book_id", "precision", "recall", "f1", "accuracy", "tau")


def emit_report(report: MetricReport, csv_path: str | Path) -> str:
    """Write the per-book CSV and return a human-readable summary table."""
    try:
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(REPORT_COLUMNS)
            for b in report.books:
                writer.writerow([
                    b.book_id,
                    repr(b.precision), repr(b.recall), repr(b.f1), repr(b.accuracy),
                    "" if b.tau is None else repr(b.tau),
                ])
    except OSError as exc:
        raise IoFailure(f"cannot write report to {csv_path}: {exc}") from exc

    lines = [
        f"Boundary metrics (tolerance window +/-{report.window} chapters)",
        f"{'book':<16} {'prec':>6} {'recall':>6} {'f1':>6} {'acc':>6} {'tau':>6}",
    ]
    for b in report.books:
        tau = f"{b.tau:.3f}" if b.tau is not None else "   -"
        lines.append(
            f"{b.book_id:<16} {b.precision:>6.3f} {b.recall:>6.3f} "
            f"{b.f1:>6.3f} {b.accuracy:>6.3f} {tau:>6}"
        )
    if report.books:
        lines.append(
            f"{'macro mean':<16} {report.macro('precision'):>6.3f} "
            f"{report.macro('recall'):>6.3f} {report.macro('f1'):>6.3f} "
            f"{report.macro('accuracy'):>6.3f}"
        )
    return "\n".join(lines)
