"""Binary classification metrics over prediction records.

All metrics are computed on the fraction scale and reported x100 at the
formatting layer. Records flagged excluded (the first labeled pair of each
dialogue, which no history-based predictor can see coming) never enter any
metric.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from scipy.stats import rankdata

from dialogue_kt.kt_core import PredictionRecord

log = logging.getLogger(__name__)


def accuracy(labels: Sequence[int], probs: Sequence[float]) -> float:
    """Accuracy at threshold 0.5; a prediction of exactly 0.5 counts as 0."""
    if len(labels) != len(probs):
        raise ValueError("labels and probs differ in length")
    if not labels:
        raise ValueError("no records to score")
    hits = sum(1 for y, p in zip(labels, probs) if (1 if p > 0.5 else 0) == y)
    return hits / len(labels)


def auc_rank(labels: Sequence[int], probs: Sequence[float]) -> float | None:
    """AUC via the rank statistic, ties counted 0.5. None if single-class."""
    if len(labels) != len(probs):
        raise ValueError("labels and probs differ in length")
    n_pos = sum(labels)
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(probs)  # average ranks, so each tie contributes 0.5
    pos_rank_sum = sum(r for r, y in zip(ranks, labels) if y == 1)
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)


def auc_pairwise(labels: Sequence[int], probs: Sequence[float]) -> float | None:
    """Brute-force AUC over all positive/negative pairs.

    Quadratic; exists as an independent oracle for auc_rank and is kept
    deliberately separate from it.
    """
    pos = [p for p, y in zip(probs, labels) if y == 1]
    neg = [p for p, y in zip(probs, labels) if y == 0]
    if not pos or not neg:
        return None
    total = 0.0
    for a in pos:
        for b in neg:
            if a > b:
                total += 1.0
            elif a == b:
                total += 0.5
    return total / (len(pos) * len(neg))


def f1_score(labels: Sequence[int], probs: Sequence[float]) -> float:
    """F1 with the correct class (y=1) as positive; 0.5 thresholds down."""
    preds = [1 if p > 0.5 else 0 for p in probs]
    tp = sum(1 for y, yh in zip(labels, preds) if y == 1 and yh == 1)
    fp = sum(1 for y, yh in zip(labels, preds) if y == 0 and yh == 1)
    fn = sum(1 for y, yh in zip(labels, preds) if y == 1 and yh == 0)
    if 2 * tp + fp + fn == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)


@dataclass(frozen=True)
class MetricReport:
    """Metrics on the fraction scale; auc is None when only one class occurs."""

    acc: float
    auc: float | None
    f1: float
    n_scored: int

    def as_percent(self) -> dict:
        return {
            "acc": round(self.acc * 100, 4),
            "auc": None if self.auc is None else round(self.auc * 100, 4),
            "f1": round(self.f1 * 100, 4),
            "n_scored": self.n_scored,
        }

    def format_line(self) -> str:
        auc = "undefined" if self.auc is None else f"{self.auc * 100:.2f}"
        return (
            f"Acc {self.acc * 100:.2f}  AUC {auc}  F1 {self.f1 * 100:.2f}"
            f"  (n={self.n_scored})"
        )


def _scored(records: Iterable[PredictionRecord]) -> tuple[list[int], list[float]]:
    labels, probs = [], []
    for rec in records:
        if rec.excluded:
            continue
        labels.append(rec.y)
        probs.append(rec.y_hat)
    return labels, probs


def compute_metrics(records: Iterable[PredictionRecord]) -> MetricReport:
    labels, probs = _scored(records)
    if not labels:
        raise ValueError("no scorable records (all excluded or empty)")
    auc = auc_rank(labels, probs)
    if auc is None:
        log.warning("AUC undefined: only one class present among %d records", len(labels))
    return MetricReport(
        acc=accuracy(labels, probs),
        auc=auc,
        f1=f1_score(labels, probs),
        n_scored=len(labels),
    )


def majority_baseline(
    train_records: Iterable[PredictionRecord],
    test_records: Iterable[PredictionRecord],
) -> MetricReport:
    """Constant prediction at the train-set correct rate.

    The constant score makes every pos/neg pair a tie, so AUC is exactly 0.5
    whenever both classes appear in the test set. The train rate is taken
    over every labeled train record; the excluded flag only governs test
    scoring.
    """
    train_labels = [rec.y for rec in train_records]
    if not train_labels:
        raise ValueError("majority baseline needs non-empty train records")
    rate = sum(train_labels) / len(train_labels)
    rescored = [
        PredictionRecord(
            dialogue_id=rec.dialogue_id,
            j=rec.j,
            y=rec.y,
            y_hat=rate,
            z_hats=tuple(rate for _ in rec.z_hats) or (rate,),
            kcs=rec.kcs or ("__majority__",),
            excluded=rec.excluded,
        )
        for rec in test_records
    ]
    return compute_metrics(rescored)


def fold_summary(reports: Sequence[MetricReport]) -> dict:
    """Mean and std across folds; AUC-undefined folds counted and dropped
    from the AUC aggregate only."""
    if not reports:
        raise ValueError("no fold reports to summarize")

    def agg(values: list[float]) -> dict:
        mean = sum(values) / len(values)
        var = sum((v - mean) ** 2 for v in values) / len(values)
        return {"mean": round(mean * 100, 4), "std": round(math.sqrt(var) * 100, 4)}

    aucs = [r.auc for r in reports if r.auc is not None]
    undefined = len(reports) - len(aucs)
    if undefined:
        log.warning("%d fold(s) had undefined AUC and were dropped from the AUC mean", undefined)
    out = {
        "folds": len(reports),
        "acc": agg([r.acc for r in reports]),
        "f1": agg([r.f1 for r in reports]),
        "auc": agg(aucs) if aucs else None,
        "auc_undefined_folds": undefined,
        "n_scored": sum(r.n_scored for r in reports),
        "per_fold": [r.as_percent() for r in reports],
    }
    return out
