"""Corpus layer: dialogue model, ingestion, canonical IO, splits, statistics."""

from dialogue_kt.corpus.model import (
    NA,
    AnnotatedDialogue,
    Correctness,
    Role,
    Turn,
    TurnPair,
    unique_kcs,
)
from dialogue_kt.corpus.io import (
    CorpusFormatError,
    IngestReport,
    dialogue_from_dict,
    dialogue_to_dict,
    ingest_dataset,
    ingest_dataset_with_report,
    load_canonical,
    save_canonical,
)
from dialogue_kt.corpus.splits import SplitError, SplitPlan, make_splits
from dialogue_kt.corpus.stats import StatsReport, dataset_statistics

__all__ = [
    "NA",
    "AnnotatedDialogue",
    "Correctness",
    "CorpusFormatError",
    "IngestReport",
    "Role",
    "SplitError",
    "SplitPlan",
    "StatsReport",
    "Turn",
    "TurnPair",
    "dataset_statistics",
    "dialogue_from_dict",
    "dialogue_to_dict",
    "ingest_dataset",
    "ingest_dataset_with_report",
    "load_canonical",
    "make_splits",
    "save_canonical",
    "unique_kcs",
]
