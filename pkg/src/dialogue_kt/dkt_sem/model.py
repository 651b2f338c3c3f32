"""DKT-Sem model: projected text features through an LSTM, bilinear readout.

Per pair j the input is x_j = tanh([t_j; s_j; c_j] W) combined with a
learned correctness embedding, where c_j averages the pair's KC description
embeddings. Masteries for pair j read out of the hidden state left by pair
j-1, so a pair's own label and text never reach its own prediction:

    z_hat_j = sigmoid(h_{j-1} B C^T), selected at the pair's KC rows.

The plain-DKT ablation swaps the frozen description matrix C for a learned
KC-ID embedding table and zeroes the text features, same everything else.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch
from torch import nn

from dialogue_kt.corpus import NA, AnnotatedDialogue
from dialogue_kt.dkt_sem.encoder import EmbeddingTable

# correctness embedding rows
Y_INCORRECT, Y_CORRECT, Y_NA = 0, 1, 2


@dataclass
class DKTSemConfig:
    embed_dim: int = 64  # E: encoder output dimension
    hidden_size: int = 64  # H
    use_text: bool = True  # False = plain-DKT ablation (ID embeddings)
    combine: str = "add"  # how x merges with emb(y): "add" or "concat"
    include_na_context: bool = True  # keep na pairs as context steps
    dtype: str = "float32"  # "float64" for finite-difference checks

    def torch_dtype(self) -> torch.dtype:
        return {"float32": torch.float32, "float64": torch.float64}[self.dtype]


@dataclass
class DialogueFeatures:
    """Per-pair model inputs for one dialogue, in turn order."""

    dialogue_id: str
    ts: np.ndarray  # [T, 2E] tutor and student text embeddings
    kc_weights: np.ndarray  # [T, n_kcs] rows sum to 1 (mean weights), 0 if no KCs
    y_idx: np.ndarray  # [T] correctness embedding row per pair
    labels: np.ndarray  # [T] 0/1, or -1 where unlabeled
    js: list[int] = field(default_factory=list)


def kc_mean_weights(kcs: Sequence[str], kc_index: dict[str, int], n_kcs: int) -> np.ndarray:
    row = np.zeros(n_kcs, dtype=np.float32)
    if kcs:
        for kc in kcs:
            row[kc_index[kc]] = 1.0
        row /= len(kcs)
    return row


def build_inputs(
    dialogue: AnnotatedDialogue,
    table: EmbeddingTable,
    kc_index: dict[str, int],
    include_na_context: bool = True,
) -> DialogueFeatures:
    """Encode one dialogue into model inputs.

    na pairs either appear as context steps with the dedicated third
    correctness row, or are dropped entirely under the labeled-only flag.
    """
    n_kcs = len(kc_index)
    ts_rows, kc_rows, y_rows, label_rows, js = [], [], [], [], []
    for pair in dialogue.turn_pairs:
        if pair.correctness is NA and not include_na_context:
            continue
        ts_rows.append(np.concatenate([table.get(pair.tutor_text), table.get(pair.student_text)]))
        kc_rows.append(kc_mean_weights(pair.kcs, kc_index, n_kcs))
        if pair.correctness is NA:
            y_rows.append(Y_NA)
            label_rows.append(-1)
        else:
            y_rows.append(Y_CORRECT if pair.correctness == 1 else Y_INCORRECT)
            label_rows.append(pair.correctness)
        js.append(pair.j)
    if not ts_rows:
        return DialogueFeatures(
            dialogue_id=dialogue.id,
            ts=np.zeros((0, 2 * table.dim), dtype=np.float32),
            kc_weights=np.zeros((0, n_kcs), dtype=np.float32),
            y_idx=np.zeros(0, dtype=np.int64),
            labels=np.zeros(0, dtype=np.int64),
            js=[],
        )
    return DialogueFeatures(
        dialogue_id=dialogue.id,
        ts=np.asarray(ts_rows, dtype=np.float32),
        kc_weights=np.asarray(kc_rows, dtype=np.float32),
        y_idx=np.asarray(y_rows, dtype=np.int64),
        labels=np.asarray(label_rows, dtype=np.int64),
        js=js,
    )


def collate(features: Sequence[DialogueFeatures], dtype: torch.dtype) -> dict:
    """Pad a batch of dialogues to a common length."""
    if not features:
        raise ValueError("empty batch")
    t_max = max(len(f.y_idx) for f in features)
    if t_max == 0:
        raise ValueError("batch contains no turn pairs")
    b = len(features)
    two_e = features[0].ts.shape[1]
    n_kcs = features[0].kc_weights.shape[1]
    ts = torch.zeros(b, t_max, two_e, dtype=dtype)
    kc_w = torch.zeros(b, t_max, n_kcs, dtype=dtype)
    y_idx = torch.zeros(b, t_max, dtype=torch.int64)
    labels = torch.full((b, t_max), -1, dtype=torch.int64)
    mask = torch.zeros(b, t_max, dtype=torch.bool)
    for i, f in enumerate(features):
        t = len(f.y_idx)
        if t == 0:
            continue
        ts[i, :t] = torch.as_tensor(f.ts, dtype=dtype)
        kc_w[i, :t] = torch.as_tensor(f.kc_weights, dtype=dtype)
        y_idx[i, :t] = torch.as_tensor(f.y_idx)
        labels[i, :t] = torch.as_tensor(f.labels)
        mask[i, :t] = True
    return {"ts": ts, "kc_weights": kc_w, "y_idx": y_idx, "labels": labels, "mask": mask}


class DKTSemModel(nn.Module):
    def __init__(self, config: DKTSemConfig, kc_matrix: np.ndarray):
        """kc_matrix: [n_kcs, E] description embeddings; frozen and
        row-normalized in text mode, replaced by a learned ID table in the
        ablation."""
        super().__init__()
        self.config = config
        dtype = config.torch_dtype()
        n_kcs, embed_dim = kc_matrix.shape
        if embed_dim != config.embed_dim:
            raise ValueError(f"kc_matrix dim {embed_dim} != embed_dim {config.embed_dim}")
        self.n_kcs = n_kcs
        h = config.hidden_size

        if config.use_text:
            mat = torch.as_tensor(kc_matrix, dtype=dtype)
            norms = mat.norm(dim=1, keepdim=True).clamp_min(1e-12)
            self.register_buffer("kc_desc", mat / norms)
            self.kc_id_emb = None
        else:
            self.kc_desc = None
            self.kc_id_emb = nn.Embedding(n_kcs, embed_dim)

        self.input_proj = nn.Linear(3 * embed_dim, h, bias=False)  # W
        self.y_emb = nn.Embedding(3, h)  # incorrect / correct / na
        lstm_in = h if config.combine == "add" else 2 * h
        if config.combine not in ("add", "concat"):
            raise ValueError(f"unknown combine mode {config.combine!r}")
        self.cell = nn.LSTM(lstm_in, h, batch_first=True)
        self.readout = nn.Linear(h, embed_dim, bias=False)  # B
        self.to(dtype)

    def kc_matrix(self) -> torch.Tensor:
        return self.kc_desc if self.config.use_text else self.kc_id_emb.weight

    def forward(self, batch: dict) -> torch.Tensor:
        """Mastery logits [B, T, n_kcs]; entry (b, t) is the prediction for
        pair t of dialogue b, computed from pairs strictly before t."""
        ts, kc_w, y_idx = batch["ts"], batch["kc_weights"], batch["y_idx"]
        kc_mat = self.kc_matrix()
        c = kc_w @ kc_mat
        if self.config.use_text:
            feats = torch.cat([ts, c], dim=-1)
        else:
            feats = torch.cat([torch.zeros_like(ts), c], dim=-1)
        x = torch.tanh(self.input_proj(feats))
        y = self.y_emb(y_idx)
        x = x + y if self.config.combine == "add" else torch.cat([x, y], dim=-1)

        h_seq, _ = self.cell(x)
        # prediction for pair t reads the state after pair t-1; h_0 = 0
        h_prev = torch.cat([torch.zeros_like(h_seq[:, :1]), h_seq[:, :-1]], dim=1)
        return self.readout(h_prev) @ kc_mat.T

    def pair_correctness(self, batch: dict) -> torch.Tensor:
        """Predicted y_hat [B, T]: mean mastery over each pair's KCs."""
        z = torch.sigmoid(self.forward(batch))
        return (batch["kc_weights"] * z).sum(dim=-1)
