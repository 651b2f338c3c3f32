"""LLM-driven annotation: correctness labels and KC tagging over dialogues."""

from dialogue_kt.annotator.client import (
    ChatClient,
    Decoding,
    EndpointClient,
    ScriptedClient,
    TransportError,
)
from dialogue_kt.annotator.parse import ParseError
from dialogue_kt.annotator.pipeline import (
    AnnotationConfig,
    AnnotationResult,
    annotate_corpus,
    annotate_correctness,
    annotate_dialogue,
    annotate_kcs,
    apply_annotations,
)
from dialogue_kt.annotator.prompts import PROMPT_VERSION

__all__ = [
    "AnnotationConfig",
    "AnnotationResult",
    "ChatClient",
    "Decoding",
    "EndpointClient",
    "PROMPT_VERSION",
    "ParseError",
    "ScriptedClient",
    "TransportError",
    "annotate_corpus",
    "annotate_correctness",
    "annotate_dialogue",
    "annotate_kcs",
    "apply_annotations",
]
