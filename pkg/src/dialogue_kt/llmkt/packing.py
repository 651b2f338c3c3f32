"""Packed multi-KC scoring plans: token layout, attention mask, positions.

Layout is [context][query_1]...[query_K]. Context tokens attend causally
among themselves. Query tokens attend to the full context and causally
within their own segment, never to another query. Every query is assigned
positions continuing directly from the context, so the model sees each
query as if it alone followed the dialogue.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from dialogue_kt.llmkt.prompt import KTPrompt


@dataclass
class PackedPrompt:
    input_ids: torch.Tensor  # [T]
    attention_mask: torch.Tensor  # [T, T] bool, True = may attend
    position_ids: torch.Tensor  # [T]
    verdict_positions: torch.Tensor  # [K] index of each query's last token


def pack_prompt(prompt: KTPrompt) -> PackedPrompt:
    c = len(prompt.context_ids)
    segments = [list(prompt.context_ids)]
    positions = list(range(c))
    spans: list[tuple[int, int]] = []  # query segment boundaries
    cursor = c
    for query in prompt.query_ids:
        segments.append(list(query))
        positions.extend(range(c, c + len(query)))
        spans.append((cursor, cursor + len(query)))
        cursor += len(query)

    ids = [tok for seg in segments for tok in seg]
    t = len(ids)
    mask = torch.zeros(t, t, dtype=torch.bool)
    causal = torch.tril(torch.ones(c, c, dtype=torch.bool))
    mask[:c, :c] = causal
    for start, end in spans:
        mask[start:end, :c] = True  # queries see the whole context
        mask[start:end, start:end] = torch.tril(
            torch.ones(end - start, end - start, dtype=torch.bool)
        )

    return PackedPrompt(
        input_ids=torch.tensor(ids, dtype=torch.int64),
        attention_mask=mask,
        position_ids=torch.tensor(positions, dtype=torch.int64),
        verdict_positions=torch.tensor([end - 1 for _, end in spans], dtype=torch.int64),
    )


def sequential_inputs(prompt: KTPrompt, k: int) -> PackedPrompt:
    """Plain causal sequence for query k alone: the unpacked reference."""
    ids = list(prompt.context_ids) + list(prompt.query_ids[k])
    t = len(ids)
    return PackedPrompt(
        input_ids=torch.tensor(ids, dtype=torch.int64),
        attention_mask=torch.tril(torch.ones(t, t, dtype=torch.bool)),
        position_ids=torch.arange(t, dtype=torch.int64),
        verdict_positions=torch.tensor([t - 1], dtype=torch.int64),
    )


def pack_batch(packed: list[PackedPrompt], pad_id: int) -> dict:
    """Pad packed prompts to a common length for batched scoring.

    Padding rows attend only to themselves (an all-blocked row would make
    softmax undefined) and sit at position 0; nothing reads their outputs.
    """
    if not packed:
        raise ValueError("empty batch")
    t_max = max(p.input_ids.shape[0] for p in packed)
    b = len(packed)
    input_ids = torch.full((b, t_max), pad_id, dtype=torch.int64)
    mask = torch.zeros(b, t_max, t_max, dtype=torch.bool)
    mask |= torch.eye(t_max, dtype=torch.bool)
    position_ids = torch.zeros(b, t_max, dtype=torch.int64)
    verdicts = []
    for i, p in enumerate(packed):
        t = p.input_ids.shape[0]
        input_ids[i, :t] = p.input_ids
        mask[i, :t, :t] = p.attention_mask
        position_ids[i, :t] = p.position_ids
        verdicts.append(p.verdict_positions)
    return {
        "input_ids": input_ids,
        "attention_mask": mask,
        "position_ids": position_ids,
        "verdict_positions": verdicts,
    }
