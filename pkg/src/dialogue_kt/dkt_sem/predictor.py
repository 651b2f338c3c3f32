"""KTPredictor wrapper: replay a pair's history through the trained model."""

from __future__ import annotations

import numpy as np
import torch

from dialogue_kt.corpus import NA
from dialogue_kt.dkt_sem.encoder import EmbeddingTable
from dialogue_kt.dkt_sem.model import (
    Y_CORRECT,
    Y_INCORRECT,
    Y_NA,
    DKTSemModel,
    kc_mean_weights,
)
from dialogue_kt.kt_core import PairContext


class DKTSemPredictor:
    """Stateless per-call inference: history in, per-KC masteries out.

    The hidden state is built from the context history only; the current
    pair contributes nothing but its KC identities, so the prediction
    cannot see the current turn or label.
    """

    def __init__(self, model: DKTSemModel, table: EmbeddingTable, kc_index: dict[str, int]):
        self.model = model
        self.table = table
        self.kc_index = kc_index
        self.training_log: list[dict] = []

    def _history_state(self, context: PairContext) -> torch.Tensor:
        dtype = self.model.config.torch_dtype()
        n_kcs = len(self.kc_index)
        rows_ts, rows_kc, rows_y = [], [], []
        for past in context.history:
            if past.correctness is NA and not self.model.config.include_na_context:
                continue
            known = [kc for kc in past.kcs if kc in self.kc_index]
            rows_ts.append(
                np.concatenate(
                    [self.table.get(past.tutor_text), self.table.get(past.student_text)]
                )
            )
            rows_kc.append(kc_mean_weights(known, self.kc_index, n_kcs))
            if past.correctness is NA:
                rows_y.append(Y_NA)
            else:
                rows_y.append(Y_CORRECT if past.correctness == 1 else Y_INCORRECT)
        h = self.model.config.hidden_size
        if not rows_ts:
            return torch.zeros(h, dtype=dtype)
        ts = torch.as_tensor(np.asarray(rows_ts), dtype=dtype).unsqueeze(0)
        kc_w = torch.as_tensor(np.asarray(rows_kc), dtype=dtype).unsqueeze(0)
        y_idx = torch.as_tensor(rows_y, dtype=torch.int64).unsqueeze(0)

        kc_mat = self.model.kc_matrix()
        c = kc_w @ kc_mat
        if self.model.config.use_text:
            feats = torch.cat([ts, c], dim=-1)
        else:
            feats = torch.cat([torch.zeros_like(ts), c], dim=-1)
        x = torch.tanh(self.model.input_proj(feats))
        y = self.model.y_emb(y_idx)
        if self.model.config.combine == "add":
            x = x + y
        else:
            x = torch.cat([x, y], dim=-1)
        h_seq, _ = self.model.cell(x)
        return h_seq[0, -1]

    def predict_masteries(self, context: PairContext) -> list[float]:
        self.model.eval()
        with torch.no_grad():
            h_prev = self._history_state(context)
            logits = self.model.readout(h_prev) @ self.model.kc_matrix().T
            z = torch.sigmoid(logits)
        out = []
        for kc in context.kcs:
            idx = self.kc_index.get(kc)
            # a KC absent from the matrix carries no signal either way
            out.append(0.5 if idx is None else float(z[idx]))
        return out
