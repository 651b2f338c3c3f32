"""Adapter fine-tuning on the correctness objective.

The unit of loss is a dialogue: BCE over its labeled pairs is summed, and
dialogues are averaged within an effective batch assembled by gradient
accumulation, so small-memory runs keep the same objective.
"""

from __future__ import annotations

import logging
import math
import random
from typing import Mapping, Sequence

import torch

from dialogue_kt.corpus import AnnotatedDialogue
from dialogue_kt.eval.metrics import compute_metrics
from dialogue_kt.kt_core import collect_predictions, pair_contexts
from dialogue_kt.llmkt.model import ScorableLM, TinyDecoderLM
from dialogue_kt.llmkt.predictor import LLMKTPredictor
from dialogue_kt.llmkt.prompt import PromptBudgetError, build_prompt
from dialogue_kt.llmkt.scoring import score_masteries

log = logging.getLogger(__name__)

BCE_EPS = 1e-7


def _dialogue_loss(
    lm: ScorableLM,
    dialogue: AnnotatedDialogue,
    descriptions: Mapping[str, str],
    budget: int,
) -> torch.Tensor | None:
    """Sum of per-pair BCE over the dialogue's labeled pairs."""
    terms = []
    for context, y in pair_contexts(dialogue):
        try:
            prompt = build_prompt(context, descriptions, lm.encode, budget)
        except PromptBudgetError as exc:
            log.warning("skipping over-budget pair: %s", exc)
            continue
        z = score_masteries(lm, prompt, grad=True)
        y_hat = z.mean().clamp(BCE_EPS, 1.0 - BCE_EPS)
        if y == 1:
            terms.append(-torch.log(y_hat))
        else:
            terms.append(-torch.log(1.0 - y_hat))
    if not terms:
        return None
    return torch.stack(terms).sum()


def finetune(
    lm: ScorableLM,
    train: Sequence[AnnotatedDialogue],
    val: Sequence[AnnotatedDialogue],
    config: Mapping | None = None,
    seed: int = 0,
) -> tuple[ScorableLM, list[dict]]:
    """Train low-rank adapters; keep the epoch state with the best val AUC."""
    config = dict(config or {})
    lr = float(config.get("lr", 2e-4))
    r = int(config.get("r", 16))
    alpha = float(config.get("alpha", 16))
    epochs = int(config.get("epochs", 5))
    effective_batch = int(config.get("effective_batch", 64))
    clip = float(config.get("clip", 1.0))
    budget = int(config.get("budget", 2048))
    patience = int(config.get("patience", 2))
    weight_decay = float(config.get("weight_decay", 0.0))
    descriptions = dict(config.get("kc_descriptions") or {})

    torch.manual_seed(seed)
    lm.add_lora(r, alpha)
    params = list(lm.adapter_parameters())
    if not params:
        raise ValueError("model exposes no adapter parameters")
    optim = torch.optim.AdamW(params, lr=lr, weight_decay=weight_decay)

    def val_auc() -> float | None:
        if not val:
            return None
        predictor = LLMKTPredictor(lm, descriptions, budget)
        records = collect_predictions(predictor, val)
        if not any(not rec.excluded for rec in records):
            return None
        return compute_metrics(records).auc

    order_rng = random.Random(seed)
    indices = list(range(len(train)))
    best_auc = -1.0
    best_state: dict | None = None
    stale = 0
    history: list[dict] = []

    for epoch in range(epochs):
        order_rng.shuffle(indices)
        epoch_loss, seen = 0.0, 0
        pending = 0
        optim.zero_grad()
        for i in indices:
            loss = _dialogue_loss(lm, train[i], descriptions, budget)
            if loss is None:
                continue
            if not math.isfinite(loss.item()):
                raise RuntimeError(
                    f"non-finite loss on dialogue {train[i].id} "
                    f"(lr={lr}, r={r}, epoch={epoch})"
                )
            (loss / effective_batch).backward()
            epoch_loss += loss.item()
            seen += 1
            pending += 1
            if pending == effective_batch:
                torch.nn.utils.clip_grad_norm_(params, clip)
                optim.step()
                optim.zero_grad()
                pending = 0
        if pending:
            torch.nn.utils.clip_grad_norm_(params, clip)
            optim.step()
            optim.zero_grad()
        if not seen:
            raise ValueError("no labeled pairs in the training dialogues")

        auc = val_auc()
        history.append({"epoch": epoch, "train_loss": epoch_loss / seen, "val_auc": auc})
        log.info("epoch %d loss %.4f val_auc %s", epoch, epoch_loss / seen, auc)
        if auc is not None:
            if auc > best_auc:
                best_auc = auc
                best_state = {
                    name: p.detach().clone()
                    for name, p in lm.named_parameters()
                    if "lora_" in name
                }
                stale = 0
            else:
                stale += 1
                if stale >= patience:
                    log.info("early stop at epoch %d (best val AUC %.4f)", epoch, best_auc)
                    break

    if best_state is not None:
        state = lm.state_dict()
        state.update(best_state)
        lm.load_state_dict(state)
    return lm, history


def train_llmkt(
    train: Sequence[AnnotatedDialogue],
    val: Sequence[AnnotatedDialogue],
    config: Mapping | None = None,
    seed: int = 0,
) -> LLMKTPredictor:
    """Build the configured LM, fine-tune unless zero-shot, wrap as predictor."""
    config = dict(config or {})
    model_kind = str(config.get("model", "tiny"))
    if model_kind == "tiny":
        lm: ScorableLM = TinyDecoderLM(
            vocab_size=int(config.get("vocab_size", 512)),
            dim=int(config.get("dim", 64)),
            n_heads=int(config.get("n_heads", 4)),
            n_layers=int(config.get("n_layers", 2)),
            seed=seed,
        )
    else:
        from dialogue_kt.llmkt.model import HFDecoderLM

        lm = HFDecoderLM(model_kind)
    descriptions = dict(config.get("kc_descriptions") or {})
    budget = int(config.get("budget", 2048))
    history: list[dict] = []
    if not config.get("zero_shot", False):
        lm, history = finetune(lm, train, val, config, seed)
    predictor = LLMKTPredictor(lm, descriptions, budget)
    predictor.training_log = history
    return predictor
