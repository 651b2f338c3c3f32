"""Scorable decoder LMs: the interface, a tiny test stand-in, low-rank adapters.

The scoring and training code only needs a model that (a) tokenizes text,
(b) names the two single-token verdicts, (c) returns logits under explicit
attention masks and position ids, and (d) exposes adapter parameters for
fine-tuning. Model identity is configuration: a small self-contained
decoder here, a pretrained checkpoint behind the same protocol elsewhere.
"""

from __future__ import annotations

import hashlib
import logging
import math
import re
from typing import Iterable, Protocol, runtime_checkable

import torch
from torch import nn

log = logging.getLogger(__name__)

PAD_ID = 0
BOS_ID = 1
TRUE_ID = 2
FALSE_ID = 3
_RESERVED = 4

_WORD = re.compile(r"[a-z0-9]+|[^\sa-z0-9]")


@runtime_checkable
class ScorableLM(Protocol):
    pad_id: int
    verdict_ids: tuple[int, int]  # (true, false)

    def encode(self, text: str) -> list[int]: ...

    def forward_logits(
        self,
        input_ids: torch.Tensor,
        attention_mask: torch.Tensor,
        position_ids: torch.Tensor,
    ) -> torch.Tensor: ...

    def add_lora(self, r: int, alpha: float) -> None: ...

    def adapter_parameters(self) -> Iterable[nn.Parameter]: ...


class HashTokenizer:
    """Deterministic word-level tokenizer over a fixed-size vocabulary.

    The verdict words map to their reserved single ids; everything else is
    bucketed by a stable digest, so the same text always encodes the same
    way across processes.
    """

    def __init__(self, vocab_size: int = 512):
        if vocab_size <= _RESERVED:
            raise ValueError(f"vocab_size must exceed {_RESERVED}")
        self.vocab_size = vocab_size

    def encode(self, text: str) -> list[int]:
        ids = []
        for word in _WORD.findall(text.lower()):
            if word == "true":
                ids.append(TRUE_ID)
            elif word == "false":
                ids.append(FALSE_ID)
            else:
                digest = hashlib.sha256(word.encode()).digest()
                bucket = int.from_bytes(digest[:4], "big") % (self.vocab_size - _RESERVED)
                ids.append(_RESERVED + bucket)
        return ids


class LoRALinear(nn.Module):
    """Frozen linear layer plus a trainable low-rank update.

    y = x W^T + (alpha / r) * (x A^T) B^T, with A gaussian and B zero at
    init so the wrapped layer starts exactly equal to the base layer.
    """

    def __init__(self, base: nn.Linear, r: int, alpha: float):
        super().__init__()
        if r < 1:
            raise ValueError("LoRA rank must be >= 1")
        self.base = base
        self.base.weight.requires_grad_(False)
        if self.base.bias is not None:
            self.base.bias.requires_grad_(False)
        self.scale = alpha / r
        self.lora_a = nn.Parameter(torch.randn(r, base.in_features) * 0.02)
        self.lora_b = nn.Parameter(torch.zeros(base.out_features, r))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.base(x) + self.scale * ((x @ self.lora_a.T) @ self.lora_b.T)


def _rotate_half(x: torch.Tensor) -> torch.Tensor:
    half = x.shape[-1] // 2
    return torch.cat([-x[..., half:], x[..., :half]], dim=-1)


def _apply_rope(
    q: torch.Tensor, k: torch.Tensor, position_ids: torch.Tensor, head_dim: int
) -> tuple[torch.Tensor, torch.Tensor]:
    """Rotary embedding driven by explicit positions [B, T]."""
    device, dtype = q.device, q.dtype
    inv_freq = 1.0 / (
        10000.0 ** (torch.arange(0, head_dim, 2, device=device, dtype=dtype) / head_dim)
    )
    angles = position_ids.to(dtype).unsqueeze(-1) * inv_freq  # [B, T, hd/2]
    cos = torch.cat([angles.cos(), angles.cos()], dim=-1).unsqueeze(1)  # [B, 1, T, hd]
    sin = torch.cat([angles.sin(), angles.sin()], dim=-1).unsqueeze(1)
    return q * cos + _rotate_half(q) * sin, k * cos + _rotate_half(k) * sin


class _Attention(nn.Module):
    def __init__(self, dim: int, n_heads: int):
        super().__init__()
        if dim % n_heads:
            raise ValueError("dim must divide by n_heads")
        self.n_heads = n_heads
        self.head_dim = dim // n_heads
        self.q_proj = nn.Linear(dim, dim, bias=False)
        self.k_proj = nn.Linear(dim, dim, bias=False)
        self.v_proj = nn.Linear(dim, dim, bias=False)
        self.o_proj = nn.Linear(dim, dim, bias=False)

    def forward(
        self, x: torch.Tensor, attention_mask: torch.Tensor, position_ids: torch.Tensor
    ) -> torch.Tensor:
        b, t, d = x.shape

        def split(v: torch.Tensor) -> torch.Tensor:
            return v.view(b, t, self.n_heads, self.head_dim).transpose(1, 2)

        q, k, v = split(self.q_proj(x)), split(self.k_proj(x)), split(self.v_proj(x))
        q, k = _apply_rope(q, k, position_ids, self.head_dim)
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)
        # True = may attend; disallowed pairs contribute exactly zero weight
        scores = scores.masked_fill(~attention_mask.unsqueeze(1), float("-inf"))
        weights = torch.softmax(scores, dim=-1)
        out = (weights @ v).transpose(1, 2).reshape(b, t, d)
        return self.o_proj(out)


class _Block(nn.Module):
    def __init__(self, dim: int, n_heads: int):
        super().__init__()
        self.ln1 = nn.LayerNorm(dim)
        self.attn = _Attention(dim, n_heads)
        self.ln2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(
            nn.Linear(dim, 4 * dim), nn.GELU(), nn.Linear(4 * dim, dim)
        )

    def forward(self, x, attention_mask, position_ids):
        x = x + self.attn(self.ln1(x), attention_mask, position_ids)
        return x + self.mlp(self.ln2(x))


class TinyDecoderLM(nn.Module):
    """Small decoder-only LM for tests and desk-scale runs.

    Positions come exclusively from the caller's position_ids (rotary, no
    position table), and attention honors an arbitrary boolean mask, which
    is exactly what packed multi-query scoring needs.
    """

    def __init__(
        self,
        vocab_size: int = 512,
        dim: int = 64,
        n_heads: int = 4,
        n_layers: int = 2,
        seed: int = 0,
    ):
        super().__init__()
        torch.manual_seed(seed)
        self.tokenizer = HashTokenizer(vocab_size)
        self.pad_id = PAD_ID
        self.verdict_ids = (TRUE_ID, FALSE_ID)
        self.embed = nn.Embedding(vocab_size, dim)
        self.blocks = nn.ModuleList(_Block(dim, n_heads) for _ in range(n_layers))
        self.ln_f = nn.LayerNorm(dim)
        self.lm_head = nn.Linear(dim, vocab_size, bias=False)
        self._lora_wrapped = False

    def encode(self, text: str) -> list[int]:
        return self.tokenizer.encode(text)

    def forward_logits(
        self,
        input_ids: torch.Tensor,
        attention_mask: torch.Tensor,
        position_ids: torch.Tensor,
    ) -> torch.Tensor:
        x = self.embed(input_ids)
        for block in self.blocks:
            x = block(x, attention_mask, position_ids)
        return self.lm_head(self.ln_f(x))

    def add_lora(self, r: int, alpha: float) -> None:
        """Wrap every attention projection; base weights freeze."""
        if self._lora_wrapped:
            raise RuntimeError("adapters already added")
        for p in self.parameters():
            p.requires_grad_(False)
        for block in self.blocks:
            attn = block.attn
            attn.q_proj = LoRALinear(attn.q_proj, r, alpha)
            attn.k_proj = LoRALinear(attn.k_proj, r, alpha)
            attn.v_proj = LoRALinear(attn.v_proj, r, alpha)
            attn.o_proj = LoRALinear(attn.o_proj, r, alpha)
        self._lora_wrapped = True

    def adapter_parameters(self) -> list[nn.Parameter]:
        return [
            p
            for name, p in self.named_parameters()
            if "lora_" in name and p.requires_grad
        ]


class HFDecoderLM:
    """Pretrained causal LM behind the same protocol; loaded lazily.

    Verdict words must render as single tokens; otherwise configuration
    must name alternative single-token verdicts, and we refuse loudly
    rather than score garbage.
    """

    def __init__(
        self,
        model_name: str,
        verdict_words: tuple[str, str] = ("True", "False"),
        device: str = "cpu",
    ):
        from transformers import AutoModelForCausalLM, AutoTokenizer

        self._tok = AutoTokenizer.from_pretrained(model_name)
        self._model = AutoModelForCausalLM.from_pretrained(model_name).to(device)
        self._device = device
        self.pad_id = self._tok.pad_token_id or 0
        ids = []
        for word in verdict_words:
            pieces = self._tok.encode(word, add_special_tokens=False)
            if len(pieces) != 1:
                raise ValueError(
                    f"verdict word {word!r} tokenizes to {len(pieces)} tokens; "
                    "configure single-token verdicts for this tokenizer"
                )
            ids.append(pieces[0])
        self.verdict_ids = (ids[0], ids[1])

    def encode(self, text: str) -> list[int]:
        return self._tok.encode(text, add_special_tokens=False)

    def forward_logits(self, input_ids, attention_mask, position_ids):
        # boolean mask -> additive bias: 0 where attending, -inf where blocked
        bias = torch.zeros(attention_mask.shape, dtype=torch.float32)
        bias = bias.masked_fill(~attention_mask, float("-inf")).unsqueeze(1)
        out = self._model(
            input_ids=input_ids.to(self._device),
            attention_mask=bias.to(self._device),
            position_ids=position_ids.to(self._device),
        )
        return out.logits

    def add_lora(self, r: int, alpha: float) -> None:
        raise NotImplementedError(
            "attach adapters with a parameter-efficient fine-tuning library "
            "for pretrained checkpoints; the packaged trainer targets ScorableLM"
        )

    def adapter_parameters(self):
        return []
