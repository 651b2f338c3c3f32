"""Core data model for annotated tutor-student dialogues.

A dialogue is an alternating sequence of tutor and student turns, optionally
preceded by a student opener. Consecutive (tutor, student) turns form turn
pairs, the unit that carries a correctness label and a set of knowledge
component (KC) ids. Values are immutable after construction and safe to share
across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Mapping, Optional

# Correctness of a turn pair: 1 correct, 0 incorrect, NA when correctness is
# not defined for the pair (off-topic, emotional support, no KC involved).
NA = None
Correctness = Optional[int]


class Role(str, Enum):
    TUTOR = "tutor"
    STUDENT = "student"


@dataclass(frozen=True)
class Turn:
    """A single utterance in a dialogue."""

    role: Role
    text: str
    index: int

    def __post_init__(self) -> None:
        if self.index < 0:
            raise ValueError(f"turn index must be >= 0, got {self.index}")


def _normalize_correctness(value: Correctness) -> Correctness:
    if value is NA:
        return NA
    if value in (0, 1):
        return int(value)
    raise ValueError(f"correctness must be 0, 1 or NA, got {value!r}")


@dataclass(frozen=True)
class TurnPair:
    """One tutor turn posing a task plus the student's reply.

    ``kcs`` is stored as a sorted, de-duplicated tuple so that KC order is
    deterministic everywhere downstream (pseudo-turns, prompts). An empty KC
    set forces ``correctness`` to NA: pairs without KCs are never scored.
    """

    j: int
    tutor_text: str
    student_text: str
    correctness: Correctness = NA
    kcs: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.j < 1:
            raise ValueError(f"turn-pair index must be >= 1, got {self.j}")
        object.__setattr__(self, "correctness", _normalize_correctness(self.correctness))
        deduped = tuple(sorted(set(self.kcs)))
        object.__setattr__(self, "kcs", deduped)
        if not deduped and self.correctness is not NA:
            raise ValueError(
                f"pair j={self.j}: a pair without KCs cannot carry a correctness label"
            )

    @property
    def is_labeled(self) -> bool:
        return self.correctness is not NA


@dataclass(frozen=True)
class AnnotatedDialogue:
    """An ordered sequence of turn pairs with an optional student opener."""

    id: str
    turn_pairs: tuple[TurnPair, ...]
    s0: Optional[str] = None
    meta: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "turn_pairs", tuple(self.turn_pairs))
        for expected, pair in enumerate(self.turn_pairs, start=1):
            if pair.j != expected:
                raise ValueError(
                    f"dialogue {self.id!r}: turn-pair indices must be 1..M "
                    f"consecutive, found j={pair.j} at position {expected}"
                )

    def __len__(self) -> int:
        return len(self.turn_pairs)

    def __iter__(self) -> Iterator[TurnPair]:
        return iter(self.turn_pairs)

    @property
    def labeled_pairs(self) -> tuple[TurnPair, ...]:
        return tuple(p for p in self.turn_pairs if p.is_labeled)

    @property
    def has_labels(self) -> bool:
        """True when the dialogue qualifies for inclusion in a KT split."""
        return any(p.is_labeled for p in self.turn_pairs)

    def turns(self) -> tuple[Turn, ...]:
        """Flatten back into the alternating turn sequence."""
        out: list[Turn] = []
        idx = 0
        if self.s0 is not None:
            out.append(Turn(Role.STUDENT, self.s0, idx))
            idx += 1
        for pair in self.turn_pairs:
            out.append(Turn(Role.TUTOR, pair.tutor_text, idx))
            out.append(Turn(Role.STUDENT, pair.student_text, idx + 1))
            idx += 2
        return tuple(out)


def unique_kcs(dialogues: Iterable[AnnotatedDialogue]) -> tuple[str, ...]:
    """Sorted union of all KC ids appearing in the dialogues."""
    seen: set[str] = set()
    for d in dialogues:
        for pair in d.turn_pairs:
            seen.update(pair.kcs)
    return tuple(sorted(seen))
