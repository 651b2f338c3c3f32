"""KT prompt assembly: shared dialogue context plus one query per KC.

The context renders prior turns verbatim but never prior KC tags or
correctness labels; the current pair contributes only its tutor turn. Each
query ends right before where the verdict token would be generated, and
the packed form keeps queries mutually invisible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

from dialogue_kt.kt_core import PairContext

PROMPT_STYLE = "kt-v1"


class PromptBudgetError(ValueError):
    """Even the label-free minimum prompt exceeds the token budget."""


@dataclass(frozen=True)
class KTPrompt:
    """Tokenized context segment plus K query segments."""

    context_ids: tuple[int, ...]
    query_ids: tuple[tuple[int, ...], ...]
    kcs: tuple[str, ...]

    def __post_init__(self):
        if not self.query_ids:
            raise ValueError("prompt needs at least one KC query")
        if len(self.query_ids) != len(self.kcs):
            raise ValueError("one query segment per KC required")
        if any(len(q) == 0 for q in self.query_ids):
            raise ValueError("empty query segment")
        if not self.context_ids:
            raise ValueError("empty context segment")

    @property
    def packed_length(self) -> int:
        return len(self.context_ids) + sum(len(q) for q in self.query_ids)


_HEADER = (
    "You are tracking what a student knows during a tutoring dialogue. "
    "Read the dialogue, then judge each knowledge component.\n\nDialogue:\n"
)


def _context_text(context: PairContext, drop_oldest: int) -> str:
    """Transcript with the oldest `drop_oldest` history entries removed.

    The opening student turn counts as the oldest entry of all.
    """
    lines = []
    entries: list[str] = []
    if context.s0 is not None:
        entries.append(f"Student: {context.s0}")
    for past in context.history:
        entries.append(f"Tutor: {past.tutor_text}\nStudent: {past.student_text}")
    kept = entries[drop_oldest:] if drop_oldest else entries
    if drop_oldest and kept:
        lines.append("[earlier turns omitted]")
    lines.extend(kept)
    lines.append(f"Tutor: {context.tutor_text}")
    return _HEADER + "\n".join(lines) + "\n"


def _query_text(description: str) -> str:
    return (
        f"\nKnowledge component: {description}\n"
        "Will the student apply this correctly in their next response? Answer: "
    )


def build_prompt(
    context: PairContext,
    descriptions: Mapping[str, str],
    encode: Callable[[str], list[int]],
    budget: int = 2048,
) -> KTPrompt:
    """Deterministic prompt for one turn pair, truncated oldest-first.

    KCs missing from the description map fall back to their id text. The
    budget covers the packed sequence; when even zero history overflows it,
    the pair is rejected rather than silently mangled.
    """
    if not context.kcs:
        raise ValueError("no KCs to query")
    if budget < 8:
        raise ValueError("budget unreasonably small")
    queries = tuple(
        tuple(encode(_query_text(descriptions.get(kc, kc)))) for kc in context.kcs
    )
    n_entries = len(context.history) + (1 if context.s0 is not None else 0)
    for drop in range(n_entries + 1):
        context_ids = tuple(encode(_context_text(context, drop)))
        total = len(context_ids) + sum(len(q) for q in queries)
        if total <= budget:
            return KTPrompt(context_ids=context_ids, query_ids=queries, kcs=context.kcs)
    raise PromptBudgetError(
        f"pair {context.dialogue_id}:{context.j} needs {total} tokens "
        f"with empty history; budget is {budget}"
    )
