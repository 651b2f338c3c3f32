"""Dialogue-level train/val/test split management.

Splits are assigned at the dialogue level so no dialogue ever straddles
roles. With ``fold_count >= 2`` a cross-validation plan is built where every
dialogue lands in exactly one test fold; with ``fold_count == 1`` the
dataset's published split (``meta["split"]``) is honored and only the
validation carve-out is random.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from dialogue_kt.corpus.model import AnnotatedDialogue

log = logging.getLogger(__name__)

TRAIN, VAL, TEST = "train", "val", "test"


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class SplitPlan:
    """Per-fold assignment of dialogue ids to train/val/test."""

    fold_count: int
    seed: int
    assignments: tuple[dict[str, str], ...]  # one {dialogue id: role} map per fold

    def ids(self, fold: int, role: str) -> tuple[str, ...]:
        if role not in (TRAIN, VAL, TEST):
            raise ValueError(f"unknown split role {role!r}")
        return tuple(i for i, r in sorted(self.assignments[fold].items()) if r == role)

    def select(
        self, dialogues: Iterable[AnnotatedDialogue], fold: int, role: str
    ) -> list[AnnotatedDialogue]:
        wanted = set(self.ids(fold, role))
        return [d for d in dialogues if d.id in wanted]

    def to_dict(self) -> dict:
        return {
            "fold_count": self.fold_count,
            "seed": self.seed,
            "assignments": [dict(sorted(a.items())) for a in self.assignments],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "SplitPlan":
        return cls(
            fold_count=int(raw["fold_count"]),
            seed=int(raw["seed"]),
            assignments=tuple(dict(a) for a in raw["assignments"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "SplitPlan":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _carve_val(pool: Sequence[str], val_fraction: float, rng: random.Random) -> set[str]:
    n_val = int(round(val_fraction * len(pool)))
    shuffled = sorted(pool)
    rng.shuffle(shuffled)
    return set(shuffled[:n_val])


def make_splits(
    dialogues: Sequence[AnnotatedDialogue],
    fold_count: int,
    val_fraction: float = 0.2,
    seed: int = 0,
) -> SplitPlan:
    """Build a deterministic split plan over labeled dialogues.

    Dialogues without a single labeled pair are excluded from the plan (they
    cannot contribute to training or metrics).
    """
    if fold_count < 1:
        raise SplitError(f"fold_count must be >= 1, got {fold_count}")
    if not 0 < val_fraction < 1:
        raise SplitError(f"val_fraction must be in (0, 1), got {val_fraction}")

    eligible = [d for d in dialogues if d.has_labels]
    skipped = len(dialogues) - len(eligible)
    if skipped:
        log.warning("excluding %d dialogues without labeled pairs from the plan", skipped)
    ids = sorted(d.id for d in eligible)
    if len(ids) != len(set(ids)):
        raise SplitError("duplicate dialogue ids")
    if len(ids) < fold_count:
        raise SplitError(f"cannot make {fold_count} folds from {len(ids)} dialogues")

    if fold_count == 1:
        by_id = {d.id: d for d in eligible}
        test_ids = [i for i in ids if by_id[i].meta.get("split") == "test"]
        if not test_ids:
            raise SplitError(
                "fold_count=1 requires a published split: no dialogue has "
                'meta["split"] == "test"'
            )
        pool = [i for i in ids if i not in set(test_ids)]
        val_ids = _carve_val(pool, val_fraction, random.Random(f"{seed}:0"))
        assignment = {i: TEST for i in test_ids}
        assignment.update({i: (VAL if i in val_ids else TRAIN) for i in pool})
        return SplitPlan(fold_count=1, seed=seed, assignments=(assignment,))

    shuffled = list(ids)
    random.Random(seed).shuffle(shuffled)
    # First (n % folds) test chunks take one extra dialogue.
    base, extra = divmod(len(shuffled), fold_count)
    chunks: list[list[str]] = []
    start = 0
    for k in range(fold_count):
        size = base + (1 if k < extra else 0)
        chunks.append(shuffled[start : start + size])
        start += size

    assignments = []
    for fold in range(fold_count):
        test = set(chunks[fold])
        pool = [i for i in ids if i not in test]
        val_ids = _carve_val(pool, val_fraction, random.Random(f"{seed}:{fold}"))
        assignment = {i: TEST for i in test}
        assignment.update({i: (VAL if i in val_ids else TRAIN) for i in pool})
        assignments.append(assignment)
    return SplitPlan(fold_count=fold_count, seed=seed, assignments=tuple(assignments))
