"""LLMKT: per-KC mastery as a two-way verdict-token softmax of a decoder LM."""

from dialogue_kt.llmkt.model import LoRALinear, ScorableLM, TinyDecoderLM
from dialogue_kt.llmkt.packing import PackedPrompt, pack_batch, pack_prompt, sequential_inputs
from dialogue_kt.llmkt.prompt import KTPrompt, PromptBudgetError, build_prompt
from dialogue_kt.llmkt.predictor import LLMKTPredictor
from dialogue_kt.llmkt.scoring import score_masteries, score_sequential
from dialogue_kt.llmkt.train import finetune, train_llmkt

__all__ = [
    "KTPrompt",
    "LLMKTPredictor",
    "LoRALinear",
    "PackedPrompt",
    "PromptBudgetError",
    "ScorableLM",
    "TinyDecoderLM",
    "build_prompt",
    "finetune",
    "pack_batch",
    "pack_prompt",
    "score_masteries",
    "score_sequential",
    "sequential_inputs",
    "train_llmkt",
]
