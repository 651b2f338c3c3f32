"""Prompt assembly for correctness labeling and three-stage KC tagging.

Every builder is a pure function of (dialogue, taxonomy subset, version);
golden-file tests pin the exact text, and the version string participates
in the annotation cache key, so any wording change must bump it.
"""

from __future__ import annotations

from dialogue_kt.corpus import AnnotatedDialogue
from dialogue_kt.taxonomy import Taxonomy, children_union, render_candidates

PROMPT_VERSION = "v1"


def render_transcript(dialogue: AnnotatedDialogue) -> str:
    lines = []
    if dialogue.s0 is not None:
        lines.append(f"Student (opening): {dialogue.s0}")
    for pair in dialogue.turn_pairs:
        lines.append(f"[pair {pair.j}] Tutor: {pair.tutor_text}")
        lines.append(f"[pair {pair.j}] Student: {pair.student_text}")
    return "\n".join(lines)


_CORRECTNESS_SYSTEM = (
    "You are an expert math teacher reviewing a tutoring dialogue. You judge "
    "whether each student response correctly addresses the tutor's request."
)

_CORRECTNESS_INSTRUCTIONS = """\
For each numbered pair, first summarize in one sentence what the tutor asked \
and what the student answered, then label the student's response:
- "correct": the response correctly accomplishes what the tutor requested.
- "incorrect": the response attempts the request but is wrong at least in part.
- "na": the response does not attempt a task (e.g. a greeting, an off-topic \
remark, or the tutor asked no question).

Respond with JSON only, in exactly this shape:
{"pairs": [{"index": <pair number>, "summary": "<one sentence>", "label": "correct|incorrect|na"}]}
Include every pair exactly once, in order."""


def correctness_messages(dialogue: AnnotatedDialogue) -> list[dict]:
    """One prompt covering the full dialogue, summarize-then-label per pair."""
    transcript = render_transcript(dialogue)
    user = (
        f"Here is a tutoring dialogue with {len(dialogue.turn_pairs)} "
        f"tutor/student pairs:\n\n{transcript}\n\n{_CORRECTNESS_INSTRUCTIONS}"
    )
    return [
        {"role": "system", "content": _CORRECTNESS_SYSTEM},
        {"role": "user", "content": user},
    ]


_KC_SYSTEM = (
    "You are an expert math teacher mapping a tutoring dialogue onto a "
    "hierarchical catalog of knowledge components."
)


def domain_messages(dialogue: AnnotatedDialogue, taxonomy: Taxonomy) -> list[dict]:
    """Stage 1: pick the domains the dialogue touches, dialogue level."""
    candidates = render_candidates(taxonomy, taxonomy.domains)
    user = (
        f"Tutoring dialogue:\n\n{render_transcript(dialogue)}\n\n"
        f"Candidate domains:\n{candidates}\n\n"
        "Which domains does this dialogue exercise? Choose only from the "
        "candidate ids above. Respond with JSON only: "
        '{"selected": ["<domain id>", ...]}'
    )
    return [{"role": "system", "content": _KC_SYSTEM}, {"role": "user", "content": user}]


def cluster_messages(
    dialogue: AnnotatedDialogue, taxonomy: Taxonomy, domains: list[str]
) -> list[dict]:
    """Stage 2: summarize per pair, then pick clusters for the whole dialogue."""
    candidates = render_candidates(taxonomy, children_union(taxonomy, domains))
    user = (
        f"Tutoring dialogue:\n\n{render_transcript(dialogue)}\n\n"
        f"Candidate clusters (from the domains {', '.join(sorted(domains))}):\n"
        f"{candidates}\n\n"
        "First summarize, one line per pair, the skill each pair exercises. "
        "Then choose the clusters the dialogue as a whole exercises, only "
        "from the candidate ids above. Respond with JSON only: "
        '{"summaries": ["<pair 1 skill>", ...], "selected": ["<cluster id>", ...]}'
    )
    return [{"role": "system", "content": _KC_SYSTEM}, {"role": "user", "content": user}]


def standard_messages(
    dialogue: AnnotatedDialogue, taxonomy: Taxonomy, clusters: list[str]
) -> list[dict]:
    """Stage 3: assign standards to each pair from the clusters' children."""
    candidates = render_candidates(taxonomy, children_union(taxonomy, clusters))
    user = (
        f"Tutoring dialogue:\n\n{render_transcript(dialogue)}\n\n"
        f"Candidate standards (from the clusters {', '.join(sorted(clusters))}):\n"
        f"{candidates}\n\n"
        "For each numbered pair, list the standards the student exercises in "
        "that pair. Choose only from the candidate ids above; use an empty "
        "list when no standard applies. Respond with JSON only: "
        '{"pairs": [{"index": <pair number>, "standards": ["<standard id>", ...]}]}'
        " Include every pair exactly once, in order."
    )
    return [{"role": "system", "content": _KC_SYSTEM}, {"role": "user", "content": user}]
