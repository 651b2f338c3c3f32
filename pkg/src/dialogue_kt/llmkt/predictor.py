"""KTPredictor wrapper around a scorable LM."""

from __future__ import annotations

from typing import Mapping

from dialogue_kt.kt_core import PairContext
from dialogue_kt.llmkt.model import ScorableLM
from dialogue_kt.llmkt.prompt import build_prompt
from dialogue_kt.llmkt.scoring import score_masteries


class LLMKTPredictor:
    """Per pair: build the packed prompt, score, hand masteries back.

    Works identically with or without fine-tuned adapters; KC ids never
    index into anything, so unseen KCs with resolvable descriptions score
    like any other.
    """

    def __init__(
        self,
        lm: ScorableLM,
        descriptions: Mapping[str, str] | None = None,
        budget: int = 2048,
    ):
        self.lm = lm
        self.descriptions = dict(descriptions or {})
        self.budget = budget
        self.training_log: list[dict] = []

    def predict_masteries(self, context: PairContext) -> list[float]:
        prompt = build_prompt(context, self.descriptions, self.lm.encode, self.budget)
        return [float(z) for z in score_masteries(self.lm, prompt)]
