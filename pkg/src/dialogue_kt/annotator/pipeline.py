"""Annotation pipeline: drive a chat client over a corpus, cache, export.

Correctness labeling and KC tagging are separate prompt flows over the same
dialogue; each can be enabled independently and neither reads the other's
output. Results are cached on disk keyed by dialogue content, prompt
version, and model id, so reruns cost zero client calls.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

from dialogue_kt.annotator.client import ChatClient, Decoding, TransportError
from dialogue_kt.annotator.parse import (
    ParseError,
    parse_correctness,
    parse_selection,
    parse_standards,
)
from dialogue_kt.annotator.prompts import (
    PROMPT_VERSION,
    cluster_messages,
    correctness_messages,
    domain_messages,
    standard_messages,
)
from dialogue_kt.corpus import NA, AnnotatedDialogue, Correctness, TurnPair
from dialogue_kt.corpus.io import dialogue_to_dict
from dialogue_kt.taxonomy import Taxonomy, children_union

log = logging.getLogger(__name__)

TASK_CORRECTNESS = "correctness"
TASK_KCS = "kcs"


@dataclass(frozen=True)
class AnnotationConfig:
    model: str = "unspecified-model"
    tasks: tuple[str, ...] = (TASK_CORRECTNESS, TASK_KCS)
    retries: int = 3  # attempts per prompt, covering transport and parse errors
    temperature: float = 0.0
    max_tokens: int = 2048
    parallelism: int = 1
    cache_dir: str | None = None
    prompt_version: str = PROMPT_VERSION
    # Full-dialogue prompting reads future turns; an incremental per-turn
    # mode is reserved here but not implemented.
    full_dialogue: bool = True

    def decoding(self) -> Decoding:
        return Decoding(temperature=self.temperature, max_tokens=self.max_tokens)


@dataclass
class AnnotationResult:
    dialogue_id: str
    correctness: dict[int, Correctness] = field(default_factory=dict)
    kcs: dict[int, tuple[str, ...]] = field(default_factory=dict)
    raw: dict[str, str] = field(default_factory=dict)
    failed: bool = False
    reason: str | None = None

    def to_dict(self) -> dict:
        def enc(c: Correctness) -> str:
            return "na" if c is NA else str(c)

        return {
            "dialogue_id": self.dialogue_id,
            "correctness": {str(j): enc(c) for j, c in sorted(self.correctness.items())},
            "kcs": {str(j): list(k) for j, k in sorted(self.kcs.items())},
            "raw": dict(self.raw),
            "failed": self.failed,
            "reason": self.reason,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "AnnotationResult":
        def dec(s: str) -> Correctness:
            return NA if s == "na" else int(s)

        return cls(
            dialogue_id=raw["dialogue_id"],
            correctness={int(j): dec(c) for j, c in raw["correctness"].items()},
            kcs={int(j): tuple(k) for j, k in raw["kcs"].items()},
            raw=dict(raw["raw"]),
            failed=bool(raw["failed"]),
            reason=raw.get("reason"),
        )


def _call(
    client: ChatClient,
    messages: list[dict],
    config: AnnotationConfig,
    parse: Callable[[str], object],
) -> tuple[object, str]:
    """One prompt with bounded retries over transport and parse failures."""
    last: Exception | None = None
    for attempt in range(config.retries):
        try:
            text = client.complete(messages, config.decoding())
            return parse(text), text
        except (TransportError, ParseError) as exc:
            last = exc
            log.warning("attempt %d/%d failed: %s", attempt + 1, config.retries, exc)
    raise last


def annotate_correctness(
    dialogue: AnnotatedDialogue, client: ChatClient, config: AnnotationConfig | None = None
) -> AnnotationResult:
    """Label every pair of one dialogue via a single summarize-then-label prompt."""
    config = config or AnnotationConfig()
    if not dialogue.turn_pairs:
        raise ValueError(f"dialogue {dialogue.id} has no turn pairs")
    expected = [p.j for p in dialogue.turn_pairs]
    result = AnnotationResult(dialogue_id=dialogue.id)
    try:
        labels, text = _call(
            client,
            correctness_messages(dialogue),
            config,
            lambda t: parse_correctness(t, expected),
        )
    except (TransportError, ParseError) as exc:
        result.failed, result.reason = True, f"correctness: {exc}"
        return result
    result.correctness = labels
    result.raw["correctness"] = text
    return result


def _validated(selected: list[str], candidates: Sequence[str], stage: str) -> list[str]:
    allowed = set(candidates)
    kept = [s for s in selected if s in allowed]
    for s in selected:
        if s not in allowed:
            log.warning("%s: dropping id outside candidate set: %r", stage, s)
    return kept


def annotate_kcs(
    dialogue: AnnotatedDialogue,
    client: ChatClient,
    taxonomy: Taxonomy,
    config: AnnotationConfig | None = None,
) -> AnnotationResult:
    """Three-stage tagging: domains, then clusters, then per-pair standards.

    Each stage's selection is validated against the candidate ids derived
    from the previous stage; foreign ids are dropped, and an empty domain
    or cluster selection fails the dialogue.
    """
    config = config or AnnotationConfig()
    if not dialogue.turn_pairs:
        raise ValueError(f"dialogue {dialogue.id} has no turn pairs")
    expected = [p.j for p in dialogue.turn_pairs]
    result = AnnotationResult(dialogue_id=dialogue.id)

    try:
        selected, text = _call(
            client, domain_messages(dialogue, taxonomy), config, parse_selection
        )
        result.raw["domains"] = text
        domains = _validated(selected, taxonomy.domains, "domains")
        if not domains:
            result.failed, result.reason = True, "empty domain selection"
            return result

        selected, text = _call(
            client, cluster_messages(dialogue, taxonomy, domains), config, parse_selection
        )
        result.raw["clusters"] = text
        clusters = _validated(selected, children_union(taxonomy, domains), "clusters")
        if not clusters:
            result.failed, result.reason = True, "empty cluster selection"
            return result

        standards, text = _call(
            client,
            standard_messages(dialogue, taxonomy, clusters),
            config,
            lambda t: parse_standards(t, expected),
        )
        result.raw["standards"] = text
        candidates = children_union(taxonomy, clusters)
        result.kcs = {
            j: tuple(_validated(ids, candidates, f"standards pair {j}"))
            for j, ids in standards.items()
        }
    except (TransportError, ParseError) as exc:
        result.failed, result.reason = True, f"kcs: {exc}"
    return result


def annotate_dialogue(
    dialogue: AnnotatedDialogue,
    client: ChatClient,
    taxonomy: Taxonomy | None,
    config: AnnotationConfig | None = None,
) -> AnnotationResult:
    """Run the enabled tasks in sequence; any task failure fails the dialogue."""
    config = config or AnnotationConfig()
    result = AnnotationResult(dialogue_id=dialogue.id)
    if TASK_CORRECTNESS in config.tasks:
        part = annotate_correctness(dialogue, client, config)
        if part.failed:
            return part
        result.correctness = part.correctness
        result.raw.update(part.raw)
    if TASK_KCS in config.tasks:
        if taxonomy is None:
            raise ValueError("KC tagging requires a taxonomy")
        part = annotate_kcs(dialogue, client, taxonomy, config)
        if part.failed:
            part.correctness = result.correctness
            part.raw = {**result.raw, **part.raw}
            return part
        result.kcs = part.kcs
        result.raw.update(part.raw)
    return result


def dialogue_content_hash(dialogue: AnnotatedDialogue) -> str:
    doc = json.dumps(dialogue_to_dict(dialogue), sort_keys=True)
    return hashlib.sha256(doc.encode()).hexdigest()


def _cache_key(dialogue: AnnotatedDialogue, config: AnnotationConfig) -> str:
    raw = f"{dialogue_content_hash(dialogue)}:{config.prompt_version}:{config.model}"
    raw += ":" + ",".join(sorted(config.tasks))
    return hashlib.sha256(raw.encode()).hexdigest()


def _cache_read(cache_dir: Path, key: str) -> AnnotationResult | None:
    path = cache_dir / f"{key}.json"
    if not path.exists():
        return None
    try:
        return AnnotationResult.from_dict(json.loads(path.read_text()))
    except (json.JSONDecodeError, KeyError) as exc:
        log.warning("ignoring unreadable cache entry %s: %s", path.name, exc)
        return None


def _cache_write(cache_dir: Path, key: str, result: AnnotationResult) -> None:
    # Atomic replace keeps the cache readable under concurrent writers.
    cache_dir.mkdir(parents=True, exist_ok=True)
    path = cache_dir / f"{key}.json"
    fd, tmp = tempfile.mkstemp(dir=cache_dir, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(result.to_dict(), fh, sort_keys=True, indent=2)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def annotate_corpus(
    dialogues: Sequence[AnnotatedDialogue],
    client: ChatClient,
    taxonomy: Taxonomy | None,
    config: AnnotationConfig | None = None,
) -> tuple[list[AnnotationResult], dict]:
    """Annotate a batch with bounded parallelism and a warm-start cache.

    Per-dialogue failures are recorded, never raised; the batch always
    completes and the summary counts successes, failures, and cache hits.
    """
    config = config or AnnotationConfig()
    if config.parallelism < 1:
        raise ValueError("parallelism must be at least 1")
    cache_dir = Path(config.cache_dir) if config.cache_dir else None

    hits: dict[int, AnnotationResult] = {}
    todo: list[int] = []
    for i, dialogue in enumerate(dialogues):
        cached = _cache_read(cache_dir, _cache_key(dialogue, config)) if cache_dir else None
        if cached is not None:
            hits[i] = cached
        else:
            todo.append(i)

    def work(i: int) -> AnnotationResult:
        dialogue = dialogues[i]
        try:
            result = annotate_dialogue(dialogue, client, taxonomy, config)
        except Exception as exc:
            log.error("dialogue %s failed: %s", dialogue.id, exc)
            result = AnnotationResult(dialogue_id=dialogue.id, failed=True, reason=str(exc))
        if cache_dir and not result.failed:
            _cache_write(cache_dir, _cache_key(dialogue, config), result)
        return result

    fresh: dict[int, AnnotationResult] = {}
    if todo:
        with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
            for i, result in zip(todo, pool.map(work, todo)):
                fresh[i] = result

    results = [hits.get(i) or fresh[i] for i in range(len(dialogues))]
    summary = {
        "total": len(results),
        "succeeded": sum(1 for r in results if not r.failed),
        "failed": sum(1 for r in results if r.failed),
        "cache_hits": len(hits),
        "failures": {r.dialogue_id: r.reason for r in results if r.failed},
    }
    return results, summary


def apply_annotations(
    dialogues: Sequence[AnnotatedDialogue],
    results: Sequence[AnnotationResult],
    taxonomy: Taxonomy | None = None,
) -> list[AnnotatedDialogue]:
    """Export: merge successful annotations into new dialogues.

    Failed dialogues are dropped. A pair whose KC set came out empty cannot
    be scored, so its label is forced to na; na pairs export with no KCs
    (any tags stay in the audit record only). With a taxonomy given, every
    exported KC id must resolve in it.
    """
    by_id = {r.dialogue_id: r for r in results}
    exported: list[AnnotatedDialogue] = []
    for dialogue in dialogues:
        result = by_id.get(dialogue.id)
        if result is None or result.failed:
            continue
        pairs = []
        for pair in dialogue.turn_pairs:
            correctness = result.correctness.get(pair.j, pair.correctness)
            kcs = result.kcs.get(pair.j, pair.kcs)
            if taxonomy is not None:
                foreign = [k for k in kcs if k not in taxonomy]
                if foreign:
                    raise ValueError(
                        f"dialogue {dialogue.id} pair {pair.j}: "
                        f"KC ids not in taxonomy: {foreign}"
                    )
            if not kcs:
                correctness = NA
            if correctness is NA:
                kcs = ()
            pairs.append(
                TurnPair(
                    j=pair.j,
                    tutor_text=pair.tutor_text,
                    student_text=pair.student_text,
                    correctness=correctness,
                    kcs=tuple(kcs),
                )
            )
        exported.append(replace(dialogue, turn_pairs=tuple(pairs)))
    return exported
