"""Shared builders and fixtures for the test suite."""

from __future__ import annotations

from pathlib import Path

import pytest

from dialogue_kt.corpus import NA, AnnotatedDialogue, TurnPair
from dialogue_kt.taxonomy import Node, Taxonomy

FIXTURES = Path(__file__).parent / "fixtures"


def make_pair(j, correctness=NA, kcs=(), tutor=None, student=None):
    return TurnPair(
        j=j,
        tutor_text=tutor if tutor is not None else f"Tutor asks question {j}.",
        student_text=student if student is not None else f"Student answers {j}.",
        correctness=correctness,
        kcs=tuple(kcs),
    )


def make_dialogue(did, spec, s0=None, meta=None):
    """Build a dialogue from a list of (correctness, kcs) pair specs."""
    pairs = tuple(
        make_pair(j, correctness, kcs) for j, (correctness, kcs) in enumerate(spec, start=1)
    )
    return AnnotatedDialogue(id=did, turn_pairs=pairs, s0=s0, meta=meta or {})


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def toy_taxonomy():
    return Taxonomy(
        [
            Node("domain", "NF", "Number and operations with fractions", None),
            Node("domain", "EE", "Expressions and equations", None),
            Node("cluster", "NF.A", "Understand fractions as numbers", "NF"),
            Node("cluster", "NF.B", "Operate on fractions", "NF"),
            Node("cluster", "EE.A", "Work with radicals and exponents", "EE"),
            Node("standard", "NF.A.1", "Understand a fraction as part of a whole", "NF.A"),
            Node("standard", "NF.B.3", "Add and subtract fractions with like denominators", "NF.B"),
            Node("standard", "NF.B.4", "Multiply a fraction by a whole number", "NF.B"),
            Node("standard", "EE.A.1", "Apply properties of integer exponents", "EE.A"),
            Node("standard", "EE.A.2", "Evaluate square roots of perfect squares", "EE.A"),
        ]
    )


@pytest.fixture
def small_corpus():
    """Six labeled dialogues over two KCs, fixed by hand."""
    specs = [
        [(1, ["kc-a"]), (0, ["kc-a"]), (1, ["kc-a", "kc-b"]), (NA, [])],
        [(0, ["kc-b"]), (1, ["kc-b"]), (1, ["kc-a"])],
        [(1, ["kc-a"]), (1, ["kc-a"])],
        [(0, ["kc-a"]), (0, ["kc-b"]), (1, ["kc-b"])],
        [(1, ["kc-b"]), (NA, []), (0, ["kc-a"])],
        [(0, ["kc-a"]), (1, ["kc-a"]), (1, ["kc-b"])],
    ]
    return [
        make_dialogue(f"d{i}", spec, s0="Hi, I need help.", meta={"source": "test"})
        for i, spec in enumerate(specs)
    ]
