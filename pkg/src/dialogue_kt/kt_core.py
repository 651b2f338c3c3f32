"""Shared knowledge-tracing contracts.

Every tracer implements :class:`KTPredictor`: given the dialogue context up
to a turn pair (all tutor turns through the current one, all prior student
turns, labels, and KC sets) and the current pair's KC ids, it returns one
mastery probability per KC. Pair-level correctness is the mean of those
masteries (compensatory aggregation), and training minimizes binary cross
entropy between labels and aggregated predictions, summed within a dialogue
and averaged over dialogues.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, Sequence, runtime_checkable

from dialogue_kt.corpus.model import NA, AnnotatedDialogue, Correctness

log = logging.getLogger(__name__)

BCE_EPS = 1e-7
_AGG_TOL = 1e-9


@dataclass(frozen=True)
class HistoryPair:
    """A completed turn pair visible as context: both turns, label, KCs."""

    tutor_text: str
    student_text: str
    correctness: Correctness
    kcs: tuple[str, ...]


@dataclass(frozen=True)
class PairContext:
    """Everything a causal predictor may see when scoring pair ``j``.

    The current student turn is deliberately absent: predictions are made
    after the tutor poses the task and before the student answers.
    """

    dialogue_id: str
    j: int
    tutor_text: str
    kcs: tuple[str, ...]
    history: tuple[HistoryPair, ...] = ()
    s0: str | None = None


@runtime_checkable
class KTPredictor(Protocol):
    def predict_masteries(self, context: PairContext) -> Sequence[float]:
        """Mastery probability for each KC in ``context.kcs``, in order."""
        ...


def aggregate_correctness(masteries: Sequence[float], mode: str = "mean") -> float:
    """Combine per-KC masteries into a correctness probability.

    The default is the compensatory mean; ``mode="product"`` gives the
    conjunctive ablation.
    """
    if len(masteries) == 0:
        raise ValueError("cannot aggregate an empty mastery vector")
    for z in masteries:
        if not 0.0 <= z <= 1.0:
            raise ValueError(f"mastery {z} outside [0, 1]")
    if mode == "mean":
        return float(sum(masteries) / len(masteries))
    if mode == "product":
        return float(math.prod(masteries))
    raise ValueError(f"unknown aggregation mode {mode!r}")


@dataclass(frozen=True)
class PredictionRecord:
    """One scored turn pair: ground truth, aggregated prediction, masteries."""

    dialogue_id: str
    j: int
    y: int
    y_hat: float
    z_hats: tuple[float, ...]
    kcs: tuple[str, ...]
    excluded: bool = False

    def __post_init__(self) -> None:
        if self.y not in (0, 1):
            raise ValueError(f"y must be 0 or 1, got {self.y}")
        if len(self.z_hats) != len(self.kcs):
            raise ValueError("one mastery per KC required")

    @classmethod
    def from_masteries(
        cls,
        dialogue_id: str,
        j: int,
        y: int,
        z_hats: Sequence[float],
        kcs: Sequence[str],
        excluded: bool = False,
        aggregation: str = "mean",
    ) -> "PredictionRecord":
        y_hat = aggregate_correctness(z_hats, mode=aggregation)
        record = cls(
            dialogue_id=dialogue_id,
            j=j,
            y=y,
            y_hat=y_hat,
            z_hats=tuple(float(z) for z in z_hats),
            kcs=tuple(kcs),
            excluded=excluded,
        )
        if aggregation == "mean":
            mean = sum(record.z_hats) / len(record.z_hats)
            if abs(record.y_hat - mean) > _AGG_TOL:
                raise ValueError("y_hat does not equal the mean of z_hats")
        return record


def bce_loss(records: Iterable[PredictionRecord], eps: float = BCE_EPS) -> float:
    """Binary cross entropy: summed per dialogue, averaged over dialogues."""
    per_dialogue: dict[str, float] = {}
    for r in records:
        p = min(max(r.y_hat, eps), 1.0 - eps)
        term = -(r.y * math.log(p) + (1 - r.y) * math.log(1.0 - p))
        per_dialogue[r.dialogue_id] = per_dialogue.get(r.dialogue_id, 0.0) + term
    if not per_dialogue:
        raise ValueError("no records")
    return sum(per_dialogue.values()) / len(per_dialogue)


@dataclass(frozen=True)
class PseudoTurn:
    """A single-KC replica of a multi-KC turn pair."""

    dialogue_id: str
    j: int
    k: int
    kc: str
    y: int


def expand_pseudo_turns(dialogue: AnnotatedDialogue) -> list[PseudoTurn]:
    """One pseudo-turn per (labeled pair, KC), preserving pair and KC order."""
    out = []
    for pair in dialogue.turn_pairs:
        if pair.correctness is NA:
            continue
        for k, kc in enumerate(pair.kcs):
            out.append(
                PseudoTurn(
                    dialogue_id=dialogue.id, j=pair.j, k=k, kc=kc, y=pair.correctness
                )
            )
    return out


def pair_contexts(dialogue: AnnotatedDialogue) -> list[tuple[PairContext, int]]:
    """(context, label) for each labeled pair, in causal order.

    Unlabeled pairs never become contexts of their own but do enter the
    history of the pairs after them.
    """
    out: list[tuple[PairContext, int]] = []
    history: list[HistoryPair] = []
    for pair in dialogue.turn_pairs:
        if pair.is_labeled:
            context = PairContext(
                dialogue_id=dialogue.id,
                j=pair.j,
                tutor_text=pair.tutor_text,
                kcs=pair.kcs,
                history=tuple(history),
                s0=dialogue.s0,
            )
            out.append((context, pair.correctness))
        history.append(
            HistoryPair(
                tutor_text=pair.tutor_text,
                student_text=pair.student_text,
                correctness=pair.correctness,
                kcs=pair.kcs,
            )
        )
    return out


def collect_predictions(
    predictor: KTPredictor,
    dialogues: Iterable[AnnotatedDialogue],
    aggregation: str = "mean",
) -> list[PredictionRecord]:
    """Run a predictor over each dialogue in causal order.

    Every labeled pair yields a record; the first labeled pair of each
    dialogue is flagged ``excluded`` since no prior evidence exists for it.
    A predictor failure aborts that dialogue only.
    """
    records: list[PredictionRecord] = []
    for dialogue in dialogues:
        dialogue_records: list[PredictionRecord] = []
        try:
            for first, (context, y) in enumerate(pair_contexts(dialogue)):
                z_hats = [float(z) for z in predictor.predict_masteries(context)]
                if len(z_hats) != len(context.kcs):
                    raise ValueError(
                        f"predictor returned {len(z_hats)} masteries for "
                        f"{len(context.kcs)} KCs at {dialogue.id}:{context.j}"
                    )
                dialogue_records.append(
                    PredictionRecord.from_masteries(
                        dialogue_id=dialogue.id,
                        j=context.j,
                        y=y,
                        z_hats=z_hats,
                        kcs=context.kcs,
                        excluded=first == 0,
                        aggregation=aggregation,
                    )
                )
        except Exception:
            log.exception("predictor failed on dialogue %s; skipping it", dialogue.id)
            continue
        records.extend(dialogue_records)
    return records


def save_records(records: Iterable[PredictionRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        for r in records:
            f.write(
                json.dumps(
                    {
                        "dialogue_id": r.dialogue_id,
                        "j": r.j,
                        "y": r.y,
                        "y_hat": r.y_hat,
                        "z_hats": list(r.z_hats),
                        "kcs": list(r.kcs),
                        "excluded": r.excluded,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def load_records(path: str | Path) -> list[PredictionRecord]:
    records = []
    with Path(path).open("r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            raw = json.loads(line)
            records.append(
                PredictionRecord(
                    dialogue_id=raw["dialogue_id"],
                    j=raw["j"],
                    y=raw["y"],
                    y_hat=raw["y_hat"],
                    z_hats=tuple(raw["z_hats"]),
                    kcs=tuple(raw["kcs"]),
                    excluded=raw["excluded"],
                )
            )
    return records
