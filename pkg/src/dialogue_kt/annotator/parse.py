"""Response parsing: strict JSON first, lenient extraction as fallback."""

from __future__ import annotations

import json
import re
from typing import Sequence

from dialogue_kt.corpus import NA, Correctness

_FENCE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)

_LABELS = {"correct": 1, "incorrect": 0, "na": NA}


class ParseError(ValueError):
    """The response could not be turned into the expected structure."""


def extract_json(text: str):
    """Parse the whole text as JSON, else a fenced block, else the first
    balanced object found in the text."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    for block in _FENCE.findall(text):
        try:
            return json.loads(block)
        except json.JSONDecodeError:
            continue
    start = text.find("{")
    while start != -1:
        depth = 0
        for i in range(start, len(text)):
            if text[i] == "{":
                depth += 1
            elif text[i] == "}":
                depth -= 1
                if depth == 0:
                    try:
                        return json.loads(text[start : i + 1])
                    except json.JSONDecodeError:
                        break
        start = text.find("{", start + 1)
    raise ParseError("no JSON object found in response")


def _pair_entries(doc, expected: Sequence[int]) -> dict[int, dict]:
    if not isinstance(doc, dict) or not isinstance(doc.get("pairs"), list):
        raise ParseError('expected an object with a "pairs" list')
    entries: dict[int, dict] = {}
    for entry in doc["pairs"]:
        if not isinstance(entry, dict) or "index" not in entry:
            raise ParseError("pair entry missing an index")
        try:
            j = int(entry["index"])
        except (TypeError, ValueError) as exc:
            raise ParseError(f"non-integer pair index {entry['index']!r}") from exc
        if j in entries:
            raise ParseError(f"duplicate entry for pair {j}")
        entries[j] = entry
    if set(entries) != set(expected):
        raise ParseError(
            f"label count mismatch: got pairs {sorted(entries)}, expected {sorted(expected)}"
        )
    return entries


def parse_correctness(text: str, expected: Sequence[int]) -> dict[int, Correctness]:
    """Per-pair labels; every expected pair index must appear exactly once."""
    entries = _pair_entries(extract_json(text), expected)
    labels: dict[int, Correctness] = {}
    for j, entry in entries.items():
        raw = str(entry.get("label", "")).strip().lower()
        if raw not in _LABELS:
            raise ParseError(f"pair {j}: unknown label {entry.get('label')!r}")
        labels[j] = _LABELS[raw]
    return labels


def parse_selection(text: str) -> list[str]:
    """Stage 1/2 response: {"selected": [ids]}; order kept, duplicates dropped."""
    doc = extract_json(text)
    if not isinstance(doc, dict) or not isinstance(doc.get("selected"), list):
        raise ParseError('expected an object with a "selected" list')
    seen: list[str] = []
    for item in doc["selected"]:
        sid = str(item).strip()
        if sid and sid not in seen:
            seen.append(sid)
    return seen


def parse_standards(text: str, expected: Sequence[int]) -> dict[int, list[str]]:
    """Stage 3 response: standards per pair; empty lists are fine."""
    entries = _pair_entries(extract_json(text), expected)
    out: dict[int, list[str]] = {}
    for j, entry in entries.items():
        raw = entry.get("standards", [])
        if not isinstance(raw, list):
            raise ParseError(f'pair {j}: "standards" is not a list')
        seen: list[str] = []
        for item in raw:
            sid = str(item).strip()
            if sid and sid not in seen:
                seen.append(sid)
        out[j] = seen
    return out
