"""Corpus ingestion and the canonical on-disk format.

The canonical format is a single versioned JSON document per corpus. Raw
dataset adapters (comta, mathdial) normalize into it; everything downstream
consumes only the canonical model. Serialization sorts keys so that a
load/save round trip is byte-identical.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from dialogue_kt.corpus.model import NA, AnnotatedDialogue, Correctness, TurnPair

log = logging.getLogger(__name__)

CORPUS_SCHEMA_VERSION = 1

# CoMTA subjects with no counterpart in the KC taxonomy; dialogues on these
# subjects are dropped at ingestion.
UNSUPPORTED_SUBJECTS = frozenset({"Calculus"})


class CorpusFormatError(ValueError):
    """Raised when a corpus file cannot be parsed under the named format."""


@dataclass
class IngestReport:
    """Bookkeeping for one ingestion run."""

    total_records: int = 0
    ingested: int = 0
    dropped: list[tuple[str, str]] = field(default_factory=list)  # (dialogue id, reason)

    def drop(self, dialogue_id: str, reason: str) -> None:
        self.dropped.append((dialogue_id, reason))
        log.warning("skipping dialogue %s: %s", dialogue_id, reason)


def _correctness_to_str(value: Correctness) -> str:
    return "na" if value is NA else str(value)


def _correctness_from_str(value: str) -> Correctness:
    if value == "na":
        return NA
    if value in ("0", "1"):
        return int(value)
    raise CorpusFormatError(f"invalid correctness value {value!r}")


def dialogue_to_dict(dialogue: AnnotatedDialogue) -> dict:
    return {
        "id": dialogue.id,
        "meta": dict(dialogue.meta),
        "turns": [{"role": t.role.value, "text": t.text} for t in dialogue.turns()],
        "pairs": [
            {
                "j": p.j,
                "correctness": _correctness_to_str(p.correctness),
                "kcs": list(p.kcs),
            }
            for p in dialogue.turn_pairs
        ],
    }


def dialogue_from_dict(raw: dict) -> AnnotatedDialogue:
    turns = raw.get("turns", [])
    if not turns:
        raise CorpusFormatError(f"dialogue {raw.get('id')!r} has no turns")
    offset = 0
    s0 = None
    if turns[0]["role"] == "student":
        s0 = turns[0]["text"]
        offset = 1
    body = turns[offset:]
    if len(body) % 2 != 0:
        raise CorpusFormatError(
            f"dialogue {raw.get('id')!r}: expected an even number of turns after "
            f"the opener, got {len(body)}"
        )
    texts: list[tuple[str, str]] = []
    for i in range(0, len(body), 2):
        if body[i]["role"] != "tutor" or body[i + 1]["role"] != "student":
            raise CorpusFormatError(
                f"dialogue {raw.get('id')!r}: roles must alternate tutor/student "
                f"at turn {offset + i}"
            )
        texts.append((body[i]["text"], body[i + 1]["text"]))

    pair_meta = {p["j"]: p for p in raw.get("pairs", [])}
    pairs = []
    for j, (tutor_text, student_text) in enumerate(texts, start=1):
        p = pair_meta.get(j, {})
        pairs.append(
            TurnPair(
                j=j,
                tutor_text=tutor_text,
                student_text=student_text,
                correctness=_correctness_from_str(p.get("correctness", "na")),
                kcs=tuple(p.get("kcs", ())),
            )
        )
    return AnnotatedDialogue(
        id=str(raw["id"]), turn_pairs=tuple(pairs), s0=s0, meta=raw.get("meta", {})
    )


def save_canonical(dialogues: list[AnnotatedDialogue], path: str | Path) -> None:
    doc = {
        "version": CORPUS_SCHEMA_VERSION,
        "dialogues": [dialogue_to_dict(d) for d in dialogues],
    }
    Path(path).write_text(
        json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def load_canonical(path: str | Path) -> list[AnnotatedDialogue]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, dict) or "dialogues" not in doc:
        raise CorpusFormatError(f"{path}: not a canonical corpus document")
    version = doc.get("version")
    if version != CORPUS_SCHEMA_VERSION:
        raise CorpusFormatError(
            f"{path}: unsupported corpus schema version {version!r}"
        )
    return [dialogue_from_dict(d) for d in doc["dialogues"]]


def _merge_consecutive(messages: list[tuple[str, str]]) -> list[tuple[str, str]]:
    # Consecutive same-role messages are concatenated into one turn; the raw
    # datasets do not guarantee strict alternation.
    merged: list[tuple[str, str]] = []
    for role, text in messages:
        text = text.strip()
        if not text:
            continue
        if merged and merged[-1][0] == role:
            merged[-1] = (role, merged[-1][1] + "\n" + text)
        else:
            merged.append((role, text))
    return merged


def _pairs_from_messages(
    messages: list[tuple[str, str]],
) -> tuple[Optional[str], list[TurnPair]]:
    merged = _merge_consecutive(messages)
    s0 = None
    if merged and merged[0][0] == "student":
        s0 = merged[0][1]
        merged = merged[1:]
    pairs = []
    for i in range(0, len(merged) - 1, 2):
        # After merging, roles strictly alternate, so even offsets are tutor.
        pairs.append(
            TurnPair(j=len(pairs) + 1, tutor_text=merged[i][1], student_text=merged[i + 1][1])
        )
    return s0, pairs


_COMTA_ROLE = {"assistant": "tutor", "user": "student", "tutor": "tutor", "student": "student"}


def _ingest_comta(path: Path, report: IngestReport, split: Optional[str]) -> list[AnnotatedDialogue]:
    raw = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(raw, list):
        raise CorpusFormatError(f"{path}: expected a JSON array of dialogues")
    dialogues = []
    for i, record in enumerate(raw):
        report.total_records += 1
        did = str(record.get("id", f"comta-{i:04d}"))
        subject = record.get("math_level") or record.get("subject") or ""
        if subject in UNSUPPORTED_SUBJECTS:
            report.drop(did, f"unsupported subject {subject!r}")
            continue
        try:
            messages = [
                (_COMTA_ROLE[m["role"]], str(m["content"]))
                for m in record["data"]
            ]
        except (KeyError, TypeError) as exc:
            report.drop(did, f"malformed record: {exc!r}")
            continue
        s0, pairs = _pairs_from_messages(messages)
        if not pairs:
            report.drop(did, "no complete tutor/student turn pairs")
            continue
        meta: dict[str, object] = {"source": "comta", "subject": subject}
        if split:
            meta["split"] = split
        dialogues.append(AnnotatedDialogue(id=did, turn_pairs=tuple(pairs), s0=s0, meta=meta))
        report.ingested += 1
    return dialogues


def _mathdial_messages(conversation: str) -> list[tuple[str, str]]:
    messages = []
    for chunk in conversation.split("|EOM|"):
        chunk = chunk.strip()
        if not chunk:
            continue
        low = chunk.lower()
        if low.startswith("teacher:") or low.startswith("tutor:"):
            messages.append(("tutor", chunk.split(":", 1)[1]))
        elif low.startswith("student:"):
            messages.append(("student", chunk.split(":", 1)[1]))
        else:
            raise CorpusFormatError(f"turn without speaker prefix: {chunk[:40]!r}")
    return messages


def _ingest_mathdial(path: Path, report: IngestReport, split: Optional[str]) -> list[AnnotatedDialogue]:
    text = path.read_text(encoding="utf-8")
    if text.lstrip().startswith("["):
        records = json.loads(text)
    else:  # JSON lines
        records = [json.loads(line) for line in text.splitlines() if line.strip()]
    dialogues = []
    for i, record in enumerate(records):
        report.total_records += 1
        did = str(record.get("qid", record.get("id", f"mathdial-{i:04d}")))
        try:
            messages = _mathdial_messages(record["conversation"])
        except (KeyError, TypeError, CorpusFormatError) as exc:
            report.drop(did, f"malformed record: {exc}")
            continue
        s0, pairs = _pairs_from_messages(messages)
        if not pairs:
            report.drop(did, "no complete tutor/student turn pairs")
            continue
        meta: dict[str, object] = {"source": "mathdial"}
        record_split = record.get("split", split)
        if record_split:
            meta["split"] = record_split
        if "question" in record:
            meta["question"] = record["question"]
        dialogues.append(AnnotatedDialogue(id=did, turn_pairs=tuple(pairs), s0=s0, meta=meta))
        report.ingested += 1
    return dialogues


_ADAPTERS = {
    "comta": _ingest_comta,
    "mathdial": _ingest_mathdial,
}


def ingest_dataset_with_report(
    path: str | Path, format: str, split: Optional[str] = None
) -> tuple[list[AnnotatedDialogue], IngestReport]:
    """Ingest a raw or canonical dataset, returning dialogues plus bookkeeping."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    report = IngestReport()
    if format == "canonical":
        dialogues = load_canonical(path)
        report.total_records = report.ingested = len(dialogues)
        return dialogues, report
    adapter = _ADAPTERS.get(format)
    if adapter is None:
        raise CorpusFormatError(
            f"unknown format {format!r}; expected one of "
            f"{sorted([*_ADAPTERS, 'canonical'])}"
        )
    return adapter(path, report, split), report


def ingest_dataset(
    path: str | Path, format: str, split: Optional[str] = None
) -> list[AnnotatedDialogue]:
    dialogues, _ = ingest_dataset_with_report(path, format, split)
    return dialogues
