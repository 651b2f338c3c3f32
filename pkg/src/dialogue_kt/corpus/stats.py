"""Corpus-level descriptive statistics over labeled turn pairs.

All rates are computed only over pairs with a 0/1 correctness label; NA pairs
contribute to raw dialogue/turn counts but never to any rate.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable

from dialogue_kt.corpus.model import AnnotatedDialogue


@dataclass(frozen=True)
class StatsReport:
    n_dialogues: int
    n_pairs: int
    n_labeled: int
    pct_correct: float
    n_unique_kcs: int
    avg_kcs_per_dialogue: float
    avg_kcs_per_labeled_pair: float
    pct_multi_kc: float

    def to_dict(self) -> dict:
        return asdict(self)


def dataset_statistics(dialogues: Iterable[AnnotatedDialogue]) -> StatsReport:
    dialogues = list(dialogues)
    n_pairs = sum(len(d) for d in dialogues)
    labeled = [p for d in dialogues for p in d.turn_pairs if p.is_labeled]
    all_kcs: set[str] = set()
    per_dialogue_unique: list[int] = []
    for d in dialogues:
        d_kcs = {kc for p in d.turn_pairs for kc in p.kcs}
        all_kcs.update(d_kcs)
        per_dialogue_unique.append(len(d_kcs))

    n_labeled = len(labeled)
    n_correct = sum(p.correctness for p in labeled)
    n_multi = sum(1 for p in labeled if len(p.kcs) > 1)
    total_labeled_kcs = sum(len(p.kcs) for p in labeled)

    return StatsReport(
        n_dialogues=len(dialogues),
        n_pairs=n_pairs,
        n_labeled=n_labeled,
        pct_correct=100.0 * n_correct / n_labeled if n_labeled else 0.0,
        n_unique_kcs=len(all_kcs),
        avg_kcs_per_dialogue=(
            sum(per_dialogue_unique) / len(dialogues) if dialogues else 0.0
        ),
        avg_kcs_per_labeled_pair=total_labeled_kcs / n_labeled if n_labeled else 0.0,
        pct_multi_kc=100.0 * n_multi / n_labeled if n_labeled else 0.0,
    )
