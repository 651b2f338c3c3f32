"""DKT-Sem training: Eq.-style BCE objective, early stopping on val AUC."""

from __future__ import annotations

import logging
import math
from typing import Mapping, Sequence

import numpy as np
import torch

from dialogue_kt.corpus import AnnotatedDialogue, unique_kcs
from dialogue_kt.dkt_sem.encoder import (
    CachedEncoder,
    EmbeddingTable,
    HashingEncoder,
    SentenceEncoder,
)
from dialogue_kt.dkt_sem.model import (
    DKTSemConfig,
    DKTSemModel,
    build_inputs,
    collate,
)
from dialogue_kt.dkt_sem.predictor import DKTSemPredictor
from dialogue_kt.eval.metrics import compute_metrics
from dialogue_kt.kt_core import collect_predictions

log = logging.getLogger(__name__)

BCE_EPS = 1e-7


def batched_bce(y_hat: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Per-dialogue sum of BCE over labeled pairs, averaged over dialogues.

    labels carry -1 at unlabeled or padded positions; those terms are
    zeroed, and dialogues with no labeled pair contribute 0 to the mean.
    """
    scored = labels >= 0
    y = labels.clamp(min=0).to(y_hat.dtype)
    p = y_hat.clamp(BCE_EPS, 1.0 - BCE_EPS)
    terms = -(y * torch.log(p) + (1.0 - y) * torch.log(1.0 - p))
    terms = torch.where(scored, terms, torch.zeros_like(terms))
    return terms.sum(dim=1).mean()


def make_encoder(config: Mapping) -> SentenceEncoder:
    kind = str(config.get("encoder", "hashing"))
    if kind == "hashing":
        encoder: SentenceEncoder = HashingEncoder(dim=int(config.get("embed_dim", 64)))
    elif kind == "sbert":
        from dialogue_kt.dkt_sem.encoder import SbertEncoder

        encoder = SbertEncoder(str(config.get("sbert_model", "all-MiniLM-L6-v2")))
    else:
        raise ValueError(f"unknown encoder {kind!r}")
    cache_dir = config.get("embedding_cache_dir")
    if cache_dir:
        encoder = CachedEncoder(encoder, cache_dir)
    return encoder


def kc_description_map(kcs: Sequence[str], config: Mapping) -> dict[str, str]:
    # Descriptions come from the taxonomy when provided; a KC id with no
    # entry falls back to the id itself as its description text.
    provided = dict(config.get("kc_descriptions") or {})
    return {kc: provided.get(kc, kc) for kc in kcs}


def build_kc_matrix(
    kc_ids: Sequence[str], descriptions: Mapping[str, str], table: EmbeddingTable
) -> np.ndarray:
    rows = [table.get(descriptions[kc]) for kc in kc_ids]
    mat = np.asarray(rows, dtype=np.float32)
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return mat / norms


def train_dkt_sem(
    train: Sequence[AnnotatedDialogue],
    val: Sequence[AnnotatedDialogue],
    config: Mapping | None = None,
    seed: int = 0,
) -> DKTSemPredictor:
    """Fit on train dialogues, keep the checkpoint with the best val AUC.

    The KC matrix covers the union of KCs seen in train and val: KC
    descriptions are public text, not labels, so covering held-out ids
    leaks nothing.
    """
    config = dict(config or {})
    torch.manual_seed(seed)

    model_config = DKTSemConfig(
        embed_dim=int(config.get("embed_dim", 64)),
        hidden_size=int(config.get("hidden_size", 64)),
        use_text=bool(config.get("use_text", True)),
        combine=str(config.get("combine", "add")),
        include_na_context=bool(config.get("include_na_context", True)),
        dtype=str(config.get("dtype", "float32")),
    )
    epochs = int(config.get("epochs", 100))
    batch_size = int(config.get("batch_size", 64))
    lr = float(config.get("lr", 1e-3))
    weight_decay = float(config.get("weight_decay", 1e-2))
    patience = int(config.get("patience", 10))

    encoder = make_encoder({**config, "embed_dim": model_config.embed_dim})
    table = EmbeddingTable(encoder)
    all_dialogues = list(train) + list(val)
    kc_ids = unique_kcs(all_dialogues)
    if not kc_ids:
        raise ValueError("no KCs in the training corpus")
    descriptions = kc_description_map(kc_ids, config)
    table.add_texts(
        [p.tutor_text for d in all_dialogues for p in d.turn_pairs]
        + [p.student_text for d in all_dialogues for p in d.turn_pairs]
        + list(descriptions.values())
    )
    kc_index = {kc: i for i, kc in enumerate(kc_ids)}
    kc_matrix = build_kc_matrix(kc_ids, descriptions, table)

    model = DKTSemModel(model_config, kc_matrix)
    optim = torch.optim.AdamW(model.parameters(), lr=lr, weight_decay=weight_decay)

    features = [
        f
        for d in train
        if (f := build_inputs(d, table, kc_index, model_config.include_na_context)).js
    ]
    if not features:
        raise ValueError("no trainable dialogues")
    dtype = model_config.torch_dtype()

    def epoch_pass() -> float:
        model.train()
        order = torch.randperm(len(features)).tolist()
        total, batches = 0.0, 0
        for start in range(0, len(order), batch_size):
            chunk = [features[i] for i in order[start : start + batch_size]]
            batch = collate(chunk, dtype)
            optim.zero_grad()
            loss = batched_bce(model.pair_correctness(batch), batch["labels"])
            if not math.isfinite(loss.item()):
                raise RuntimeError(
                    f"non-finite training loss {loss.item()} "
                    f"(lr={lr}, hidden={model_config.hidden_size})"
                )
            loss.backward()
            optim.step()
            total += loss.item()
            batches += 1
        return total / max(batches, 1)

    def val_auc() -> float | None:
        if not val:
            return None
        model.eval()
        predictor = DKTSemPredictor(model, table, kc_index)
        records = collect_predictions(predictor, val)
        if not any(not r.excluded for r in records):
            return None
        return compute_metrics(records).auc

    best_auc = -1.0
    best_state = None
    stale = 0
    history: list[dict] = []
    for epoch in range(epochs):
        train_loss = epoch_pass()
        auc = val_auc()
        history.append({"epoch": epoch, "train_loss": train_loss, "val_auc": auc})
        if auc is not None:
            if auc > best_auc:
                best_auc = auc
                best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
                stale = 0
            else:
                stale += 1
                if stale >= patience:
                    log.info("early stop at epoch %d (best val AUC %.4f)", epoch, best_auc)
                    break
        log.debug("epoch %d loss %.4f val_auc %s", epoch, train_loss, auc)

    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    predictor = DKTSemPredictor(model, table, kc_index)
    predictor.training_log = history
    return predictor
