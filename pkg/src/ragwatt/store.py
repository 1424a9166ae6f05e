"""Brute-force cosine vector store over a JSONL corpus.

Corpus scale here is thousands of chunks at most, so retrieval scores
every chunk exactly; there is no approximate index to tune or drift.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .errors import RetrievalError, SchemaError, ValidationError
from .grounding import Chunk, EmbeddingProvider, cosine_similarity

__all__ = ["VectorStore", "load_corpus", "retrieve"]


class VectorStore:
    """In-memory chunk index; embeds on insert when needed."""

    def __init__(self, embedder: EmbeddingProvider) -> None:
        self.embedder = embedder
        self._chunks: List[Chunk] = []
        self._dimension: Optional[int] = None

    def __len__(self) -> int:
        return len(self._chunks)

    @property
    def chunks(self) -> Sequence[Chunk]:
        return tuple(self._chunks)

    def add(self, chunk: Chunk) -> Chunk:
        if chunk.embedding is None:
            chunk.embedding = np.asarray(
                self.embedder.embed([chunk.text])[0], dtype=np.float64
            )
        if chunk.embedding.ndim != 1:
            raise SchemaError(f"chunk {chunk.doc_id!r} embedding must be 1-d")
        if self._dimension is None:
            self._dimension = int(chunk.embedding.shape[0])
        elif chunk.embedding.shape[0] != self._dimension:
            raise SchemaError(
                f"chunk {chunk.doc_id!r} embedding dimension "
                f"{chunk.embedding.shape[0]} != corpus dimension {self._dimension}"
            )
        chunk.index = len(self._chunks)
        self._chunks.append(chunk)
        return chunk

    @classmethod
    def from_jsonl(cls, path: str | Path, embedder: EmbeddingProvider) -> "VectorStore":
        store = cls(embedder)
        for chunk in load_corpus(path):
            store.add(chunk)
        return store


def load_corpus(path: str | Path) -> List[Chunk]:
    """Parse a JSONL corpus: one chunk per line, embedding optional."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"corpus file not found: {path}")
    chunks: List[Chunk] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            try:
                chunks.append(
                    Chunk(
                        doc_id=str(raw["doc_id"]),
                        text=raw["text"],
                        page=raw.get("page"),
                        embedding=raw.get("embedding"),
                    )
                )
            except KeyError as exc:
                raise SchemaError(f"{path}:{lineno}: missing field {exc}") from exc
    return chunks


def retrieve(query: str, store: VectorStore, top_k: int = 5) -> List[Chunk]:
    """Top-k chunks by cosine similarity, ties broken by (doc_id, index)."""
    if top_k < 1:
        raise ValidationError(f"top_k must be >= 1, got {top_k}")
    if len(store) == 0:
        raise RetrievalError("cannot retrieve from an empty store", stage_kind="retrieval")
    query_vector = np.asarray(store.embedder.embed([query])[0], dtype=np.float64)
    scored = [
        (-cosine_similarity(query_vector, chunk.embedding), chunk.doc_id, chunk.index, chunk)
        for chunk in store.chunks
    ]
    scored.sort(key=lambda item: item[:3])
    return [chunk for *_rank, chunk in scored[:top_k]]
