"""Sentence encoders behind a tiny protocol, plus a disk cache.

The model only ever sees fixed-dimension vectors, so any deterministic
text-to-vector map satisfies the contract: a pretrained sentence embedder
for real runs, a hashing encoder for tests and offline work.
"""

from __future__ import annotations

import hashlib
import logging
import os
import re
import tempfile
from pathlib import Path
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

log = logging.getLogger(__name__)


@runtime_checkable
class SentenceEncoder(Protocol):
    dim: int

    def encode(self, texts: Sequence[str]) -> np.ndarray: ...


_TOKEN = re.compile(r"[a-z0-9]+")


class HashingEncoder:
    """Deterministic bag-of-words hashing into a fixed dimension.

    Each token is bucketed and signed by a stable digest, then the vector is
    L2-normalized. No fitted state, so identical text gives identical
    vectors across processes and platforms.
    """

    def __init__(self, dim: int = 64):
        if dim < 2:
            raise ValueError("dim must be at least 2")
        self.dim = dim

    def _token_slot(self, token: str) -> tuple[int, float]:
        digest = hashlib.sha256(token.encode()).digest()
        bucket = int.from_bytes(digest[:4], "big") % self.dim
        sign = 1.0 if digest[4] % 2 == 0 else -1.0
        return bucket, sign

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float32)
        for i, text in enumerate(texts):
            for token in _TOKEN.findall(text.lower()):
                bucket, sign = self._token_slot(token)
                out[i, bucket] += sign
            norm = np.linalg.norm(out[i])
            if norm > 0:
                out[i] /= norm
        return out


class SbertEncoder:
    """Pretrained sentence-embedding model, loaded lazily."""

    def __init__(self, model_name: str = "all-MiniLM-L6-v2"):
        from sentence_transformers import SentenceTransformer

        self._model = SentenceTransformer(model_name)
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        vectors = self._model.encode(list(texts), convert_to_numpy=True)
        return np.asarray(vectors, dtype=np.float32)


class CachedEncoder:
    """Disk cache keyed by text hash; safe under concurrent producers."""

    def __init__(self, inner: SentenceEncoder, cache_dir: str | Path):
        self.inner = inner
        self.dim = inner.dim
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)

    def _path(self, text: str) -> Path:
        key = hashlib.sha256(f"{self.dim}:{text}".encode()).hexdigest()
        return self.cache_dir / f"{key}.npy"

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float32)
        misses: list[int] = []
        for i, text in enumerate(texts):
            path = self._path(text)
            if path.exists():
                out[i] = np.load(path)
            else:
                misses.append(i)
        if misses:
            fresh = self.inner.encode([texts[i] for i in misses])
            for row, i in enumerate(misses):
                out[i] = fresh[row]
                path = self._path(texts[i])
                fd, tmp = tempfile.mkstemp(dir=self.cache_dir, suffix=".tmp")
                os.close(fd)
                np.save(tmp, fresh[row])  # np.save appends .npy to the tmp name
                os.replace(f"{tmp}.npy", path)
                os.unlink(tmp)
        return out


class EmbeddingTable:
    """Text -> vector lookup, precomputed so training never hits the encoder.

    Lookups for unseen text fall back to the encoder (inference on new
    dialogues); `freeze` disables that for strict training use.
    """

    def __init__(self, encoder: SentenceEncoder):
        self.encoder = encoder
        self.dim = encoder.dim
        self._table: dict[str, np.ndarray] = {}
        self.frozen = False

    def add_texts(self, texts: Sequence[str]) -> None:
        todo = sorted({t for t in texts if t not in self._table})
        if not todo:
            return
        vectors = self.encoder.encode(todo)
        for text, vec in zip(todo, vectors):
            self._table[text] = np.asarray(vec, dtype=np.float32)

    def freeze(self) -> None:
        self.frozen = True

    def get(self, text: str) -> np.ndarray:
        if text not in self._table:
            if self.frozen:
                raise KeyError(f"text not precomputed: {text[:60]!r}")
            self.add_texts([text])
        return self._table[text]

    def __len__(self) -> int:
        return len(self._table)
