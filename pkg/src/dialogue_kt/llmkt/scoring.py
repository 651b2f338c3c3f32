"""Mastery scoring: two-way softmax over the verdict-token logits."""

from __future__ import annotations

import torch

from dialogue_kt.llmkt.model import ScorableLM
from dialogue_kt.llmkt.packing import pack_prompt, sequential_inputs
from dialogue_kt.llmkt.prompt import KTPrompt


def verdict_softmax(true_logit: torch.Tensor, false_logit: torch.Tensor) -> torch.Tensor:
    """P(True) restricted to the {True, False} pair."""
    pair = torch.stack([true_logit, false_logit], dim=-1)
    return torch.softmax(pair, dim=-1)[..., 0]


def _masteries_from_logits(
    logits: torch.Tensor, verdict_positions: torch.Tensor, verdict_ids: tuple[int, int]
) -> torch.Tensor:
    true_id, false_id = verdict_ids
    at = logits[verdict_positions]  # [K, V]
    return verdict_softmax(at[:, true_id], at[:, false_id])


def score_masteries(
    lm: ScorableLM, prompt: KTPrompt, grad: bool = False
) -> torch.Tensor:
    """All K masteries from one packed forward pass."""
    packed = pack_prompt(prompt)
    ctx = torch.enable_grad() if grad else torch.no_grad()
    with ctx:
        logits = lm.forward_logits(
            packed.input_ids.unsqueeze(0),
            packed.attention_mask.unsqueeze(0),
            packed.position_ids.unsqueeze(0),
        )[0]
        return _masteries_from_logits(logits, packed.verdict_positions, lm.verdict_ids)


def score_sequential(lm: ScorableLM, prompt: KTPrompt) -> torch.Tensor:
    """K independent causal passes; the reference the packed path must match."""
    out = []
    with torch.no_grad():
        for k in range(len(prompt.kcs)):
            packed = sequential_inputs(prompt, k)
            logits = lm.forward_logits(
                packed.input_ids.unsqueeze(0),
                packed.attention_mask.unsqueeze(0),
                packed.position_ids.unsqueeze(0),
            )[0]
            out.append(
                _masteries_from_logits(logits, packed.verdict_positions, lm.verdict_ids)[0]
            )
    return torch.stack(out)
