"""Recurrent KT over sentence embeddings with a bilinear KC readout."""

from dialogue_kt.dkt_sem.encoder import (
    CachedEncoder,
    EmbeddingTable,
    HashingEncoder,
    SbertEncoder,
    SentenceEncoder,
)
from dialogue_kt.dkt_sem.model import DialogueFeatures, DKTSemConfig, DKTSemModel, build_inputs
from dialogue_kt.dkt_sem.predictor import DKTSemPredictor
from dialogue_kt.dkt_sem.train import train_dkt_sem

__all__ = [
    "CachedEncoder",
    "DKTSemConfig",
    "DKTSemModel",
    "DKTSemPredictor",
    "DialogueFeatures",
    "EmbeddingTable",
    "HashingEncoder",
    "SbertEncoder",
    "SentenceEncoder",
    "build_inputs",
    "train_dkt_sem",
]
