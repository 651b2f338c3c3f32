"""Three-level skill taxonomy: domains contain clusters contain standards.

Standards are the KC vocabulary for annotation and tracing. The on-disk
format is a flat JSON array of nodes ``{level, id, description, parent}``;
``import_coherence_map`` converts a nested domains/clusters/standards export
into that schema. The taxonomy is immutable after load and freely shared.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

LEVELS = ("domain", "cluster", "standard")
_CHILD_LEVEL = {"domain": "cluster", "cluster": "standard"}


class TaxonomyError(ValueError):
    pass


@dataclass(frozen=True)
class Node:
    level: str
    id: str
    description: str
    parent: Optional[str]


class Taxonomy:
    def __init__(self, nodes: Iterable[Node]):
        self._by_level: dict[str, dict[str, Node]] = {lvl: {} for lvl in LEVELS}
        self._children: dict[str, list[str]] = {}
        for node in nodes:
            if node.level not in LEVELS:
                raise TaxonomyError(f"unknown level {node.level!r} for node {node.id!r}")
            table = self._by_level[node.level]
            if node.id in table:
                raise TaxonomyError(f"duplicate {node.level} id {node.id!r}")
            table[node.id] = node
        self._validate()
        for level, parent_level in (("cluster", "domain"), ("standard", "cluster")):
            for node in self._by_level[level].values():
                self._children.setdefault(node.parent, []).append(node.id)
        for ids in self._children.values():
            ids.sort()

    def _validate(self) -> None:
        orphans = []
        for node in self._by_level["domain"].values():
            if node.parent is not None:
                raise TaxonomyError(f"domain {node.id!r} must not have a parent")
        for level, parent_level in (("cluster", "domain"), ("standard", "cluster")):
            for node in self._by_level[level].values():
                if node.parent is None or node.parent not in self._by_level[parent_level]:
                    orphans.append(node.id)
        if orphans:
            raise TaxonomyError(
                f"nodes with missing or wrong-level parents: {sorted(orphans)}"
            )

    @property
    def domains(self) -> tuple[str, ...]:
        return tuple(sorted(self._by_level["domain"]))

    def ids(self, level: str) -> tuple[str, ...]:
        return tuple(sorted(self._by_level[level]))

    def node(self, node_id: str) -> Node:
        for level in LEVELS:
            found = self._by_level[level].get(node_id)
            if found is not None:
                return found
        raise TaxonomyError(f"unknown taxonomy id {node_id!r}")

    def __contains__(self, node_id: str) -> bool:
        return any(node_id in self._by_level[lvl] for lvl in LEVELS)

    def is_standard(self, node_id: str) -> bool:
        return node_id in self._by_level["standard"]

    def description(self, node_id: str) -> str:
        return self.node(node_id).description

    def standard_descriptions(self, ids: Iterable[str]) -> dict[str, str]:
        out = {}
        for i in ids:
            node = self.node(i)
            if node.level != "standard":
                raise TaxonomyError(f"{i!r} is a {node.level}, not a standard")
            out[i] = node.description
        return out

    def children_of(self, node_id: str) -> tuple[str, ...]:
        self.node(node_id)
        return tuple(self._children.get(node_id, ()))

    def level_of(self, node_id: str) -> str:
        return self.node(node_id).level


def children_union(taxonomy: Taxonomy, ids: Iterable[str]) -> tuple[str, ...]:
    """Union of children of the given same-level ids, sorted for stability."""
    ids = list(ids)
    if not ids:
        return ()
    levels = {taxonomy.level_of(i) for i in ids}
    if len(levels) > 1:
        raise TaxonomyError(f"mixed-level ids in children_union: {sorted(levels)}")
    level = levels.pop()
    if level not in _CHILD_LEVEL:
        raise TaxonomyError("standards have no children")
    union: set[str] = set()
    for i in ids:
        union.update(taxonomy.children_of(i))
    return tuple(sorted(union))


def render_candidates(
    taxonomy: Taxonomy, ids: Iterable[str], description_budget: int = 240
) -> str:
    """Stable 'id: description' listing used as a prompt block.

    Descriptions longer than the character budget are truncated with a
    trailing '...' so prompt length stays bounded.
    """
    lines = []
    for i in sorted(set(ids)):
        desc = " ".join(taxonomy.description(i).split())
        if len(desc) > description_budget:
            desc = desc[: description_budget - 3].rstrip() + "..."
        lines.append(f"{i}: {desc}")
    return "\n".join(lines)


def load_taxonomy(path: str | Path) -> Taxonomy:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, list):
        raise TaxonomyError(f"{path}: expected a JSON array of nodes")
    nodes = []
    for entry in raw:
        try:
            nodes.append(
                Node(
                    level=entry["level"],
                    id=str(entry["id"]),
                    description=str(entry.get("description", "")),
                    parent=entry.get("parent"),
                )
            )
        except (KeyError, TypeError) as exc:
            raise TaxonomyError(f"{path}: malformed node {entry!r}: {exc}") from exc
    return Taxonomy(nodes)


def save_taxonomy(taxonomy: Taxonomy, path: str | Path) -> None:
    nodes = []
    for level in LEVELS:
        for node_id in taxonomy.ids(level):
            node = taxonomy.node(node_id)
            nodes.append(
                {
                    "level": node.level,
                    "id": node.id,
                    "description": node.description,
                    "parent": node.parent,
                }
            )
    Path(path).write_text(
        json.dumps(nodes, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def import_coherence_map(path: str | Path) -> Taxonomy:
    """Flatten a nested coherence-map export into a Taxonomy.

    Expected shape: ``[{id, description, clusters: [{id, description,
    standards: [{id, description}]}]}]``.
    """
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    nodes: list[Node] = []
    for domain in raw:
        nodes.append(Node("domain", str(domain["id"]), str(domain.get("description", "")), None))
        for cluster in domain.get("clusters", ()):
            nodes.append(
                Node("cluster", str(cluster["id"]), str(cluster.get("description", "")), str(domain["id"]))
            )
            for std in cluster.get("standards", ()):
                nodes.append(
                    Node("standard", str(std["id"]), str(std.get("description", "")), str(cluster["id"]))
                )
    return Taxonomy(nodes)


def kc_texts(
    taxonomy: Taxonomy, dialogues_or_ids: Iterable, extra: Mapping[str, str] | None = None
) -> dict[str, str]:
    """KC id -> description map for the KC ids used by a corpus or id list."""
    ids: set[str] = set()
    for item in dialogues_or_ids:
        if isinstance(item, str):
            ids.add(item)
        else:  # AnnotatedDialogue
            for pair in item.turn_pairs:
                ids.update(pair.kcs)
    out = taxonomy.standard_descriptions(sorted(ids))
    if extra:
        out.update(extra)
    return out
