"""Inter-rater reliability: exact-agreement overlap and Krippendorff's alpha.

Alpha uses the coincidence-matrix formulation: every ordered pair of ratings
on the same item (from different raters) contributes 1/(m_u - 1) to the
matrix cell for its value pair, where m_u is the number of ratings the item
received. Nominal and ordinal difference functions are supported; the
ordinal one squares the cumulative-margin distance between categories.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

log = logging.getLogger(__name__)

Rating = int | None


@dataclass(frozen=True)
class RatingMatrix:
    """Items x raters grid; None marks a missing rating."""

    rows: tuple[tuple[Rating, ...], ...]

    def __post_init__(self):
        if not self.rows:
            raise ValueError("rating matrix has no items")
        widths = {len(r) for r in self.rows}
        if len(widths) != 1:
            raise ValueError("all items must cover the same raters")
        if widths.pop() < 2:
            raise ValueError("need at least 2 raters")

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[Rating]]) -> "RatingMatrix":
        return cls(rows=tuple(tuple(r) for r in rows))

    @classmethod
    def load(cls, path: str | Path) -> "RatingMatrix":
        """JSON list-of-lists (null = missing) or CSV (empty cell = missing)."""
        path = Path(path)
        if path.suffix.lower() == ".json":
            return cls.from_rows(json.loads(path.read_text()))
        with path.open(newline="") as fh:
            rows = [
                [int(cell) if cell.strip() else None for cell in row]
                for row in csv.reader(fh)
                if row
            ]
        return cls.from_rows(rows)


def overlap(matrix: RatingMatrix) -> float:
    """Fraction of fully rated items on which all raters agree exactly.

    Items with any missing rating are excluded from both numerator and
    denominator; overlap has no missing-data story, unlike alpha.
    """
    complete = [row for row in matrix.rows if all(v is not None for v in row)]
    if not complete:
        raise ValueError("no fully rated items")
    agreed = sum(1 for row in complete if len(set(row)) == 1)
    return agreed / len(complete)


def _coincidences(matrix: RatingMatrix) -> dict[tuple[int, int], float]:
    coin: dict[tuple[int, int], float] = {}
    for row in matrix.rows:
        present = [v for v in row if v is not None]
        m = len(present)
        if m < 2:
            continue
        w = 1.0 / (m - 1)
        for i, a in enumerate(present):
            for j, b in enumerate(present):
                if i != j:
                    coin[(a, b)] = coin.get((a, b), 0.0) + w
    return coin


def krippendorff_alpha(matrix: RatingMatrix, level: str = "nominal") -> float:
    """Alpha = 1 - D_o / D_e over the coincidence matrix.

    Items with fewer than two ratings are ignored. If all usable ratings
    fall in one category there is no expected disagreement; that degenerate
    case is reported as perfect agreement.
    """
    if level not in ("nominal", "ordinal"):
        raise ValueError(f"unknown measurement level: {level!r}")
    coin = _coincidences(matrix)
    if not coin:
        raise ValueError("no item has two or more ratings")
    cats = sorted({c for pair in coin for c in pair})
    n_c = {c: sum(coin.get((c, k), 0.0) for k in cats) for c in cats}
    n = sum(n_c.values())

    def delta_sq(a: int, b: int) -> float:
        if level == "nominal":
            return 0.0 if a == b else 1.0
        lo, hi = min(a, b), max(a, b)
        span = sum(n_c[g] for g in cats if lo <= g <= hi)
        return (span - (n_c[a] + n_c[b]) / 2.0) ** 2

    d_obs = sum(coin.get((a, b), 0.0) * delta_sq(a, b) for a in cats for b in cats)
    d_exp = sum(n_c[a] * n_c[b] * delta_sq(a, b) for a in cats for b in cats)
    if d_exp == 0:
        log.info("single observed category: reporting alpha as 1.0")
        return 1.0
    return 1.0 - (n - 1) * d_obs / d_exp


def irr_metrics(matrix: RatingMatrix, level: str = "nominal") -> dict:
    return {
        "overlap": overlap(matrix),
        "alpha": krippendorff_alpha(matrix, level),
        "level": level,
        "n_items": len(matrix.rows),
        "n_raters": len(matrix.rows[0]),
    }
