"""Knowledge-change curves: per-KC mastery drift across occurrences.

For a KC appearing several times in a dialogue, the curve tracks the change
in predicted mastery relative to its first occurrence there, so dialogues
with different starting masteries can be averaged. Point j aggregates over
the dialogues where the KC occurs at least j times.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from dialogue_kt.kt_core import PredictionRecord

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CurvePoint:
    occurrence: int  # 1-based index of the KC occurrence within a dialogue
    mean_delta: float
    std: float
    n_dialogues: int


@dataclass(frozen=True)
class CurveSeries:
    kc: str
    points: tuple[CurvePoint, ...]


def _series_by_dialogue(
    records: Iterable[PredictionRecord],
) -> tuple[dict[str, dict[str, list[float]]], dict[str, int]]:
    """Per-KC, per-dialogue mastery sequences in turn-pair order."""
    ordered = sorted(records, key=lambda r: (r.dialogue_id, r.j))
    per_kc: dict[str, dict[str, list[float]]] = {}
    counts: dict[str, int] = {}
    for rec in ordered:
        for kc, z in zip(rec.kcs, rec.z_hats):
            per_kc.setdefault(kc, {}).setdefault(rec.dialogue_id, []).append(z)
            counts[kc] = counts.get(kc, 0) + 1
    return per_kc, counts


def knowledge_curves(
    records: Iterable[PredictionRecord], top_n: int = 15
) -> list[CurveSeries]:
    """Curves for the top_n most frequent KCs.

    KCs that never occur twice within a dialogue carry no change signal and
    are skipped with a note.
    """
    if top_n < 1:
        raise ValueError("top_n must be positive")
    per_kc, counts = _series_by_dialogue(records)
    if not per_kc:
        raise ValueError("no records with per-KC masteries")
    ranked = sorted(counts, key=lambda kc: (-counts[kc], kc))[:top_n]

    out: list[CurveSeries] = []
    for kc in ranked:
        sequences = list(per_kc[kc].values())
        max_len = max(len(s) for s in sequences)
        if max_len < 2:
            log.info("skipping KC %r: never occurs twice in one dialogue", kc)
            continue
        points = []
        for j in range(1, max_len + 1):
            deltas = [s[j - 1] - s[0] for s in sequences if len(s) >= j]
            mean = sum(deltas) / len(deltas)
            var = sum((d - mean) ** 2 for d in deltas) / len(deltas)
            points.append(
                CurvePoint(
                    occurrence=j,
                    mean_delta=mean,
                    std=math.sqrt(var),
                    n_dialogues=len(deltas),
                )
            )
        out.append(CurveSeries(kc=kc, points=tuple(points)))
    return out


def _slug(text: str) -> str:
    slug = re.sub(r"[^A-Za-z0-9._-]+", "-", text).strip("-")
    return slug or "kc"


def plot_curves(series: Sequence[CurveSeries], out_dir: str | Path) -> list[Path]:
    """One error-bar plot per KC, written as both SVG and PNG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for s in series:
        xs = [p.occurrence for p in s.points]
        ys = [p.mean_delta for p in s.points]
        errs = [p.std for p in s.points]
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.errorbar(xs, ys, yerr=errs, marker="o", capsize=3)
        ax.axhline(0.0, color="gray", linewidth=0.8, linestyle="--")
        for p in s.points:
            ax.annotate(
                f"N={p.n_dialogues}",
                (p.occurrence, p.mean_delta),
                textcoords="offset points",
                xytext=(0, 8),
                fontsize=7,
                ha="center",
            )
        ax.set_xlabel("occurrence within dialogue")
        ax.set_ylabel("change in predicted mastery")
        ax.set_title(s.kc)
        ax.set_xticks(xs)
        fig.tight_layout()
        base = out_dir / _slug(s.kc)
        for ext in ("svg", "png"):
            path = base.with_suffix(f".{ext}")
            fig.savefig(path)
            written.append(path)
        plt.close(fig)
    return written
