"""Sentence-level grounding of answers in retrieved sources.

Two verification routes share the same unit of analysis (the sentence)
but differ in cost and mechanics, and are deliberately kept separate:

* cosine route: embed each answer sentence, score it against every
  retrieved chunk, keep it when the best score clears a threshold.
* LLM route: ask a verification model for a supported/unsupported
  verdict per sentence and keep the supported ones.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import List, Optional, Protocol, Sequence, Tuple

import numpy as np

from .errors import (
    SchemaError,
    StageError,
    UndefinedSimilarityError,
    ValidationError,
    VerificationFormatError,
)

__all__ = [
    "Chunk",
    "SentenceVerdict",
    "EmbeddingProvider",
    "HashEmbedder",
    "DEFAULT_SUPPORT_THRESHOLD",
    "segment_sentences",
    "cosine_similarity",
    "filter_response",
    "llm_hallucination_check",
    "parse_verdict_reply",
    "build_verification_prompt",
    "load_prompt_template",
]

# Kept deliberately simple: a fixed threshold on the best cosine score.
DEFAULT_SUPPORT_THRESHOLD = 0.5

# Words that end in a period without ending a sentence.  Matched against
# the token preceding the period, lowercased, internal dots preserved.
_ABBREVIATIONS = frozenset(
    {
        "al",
        "approx",
        "cf",
        "dept",
        "dr",
        "e.g",
        "eq",
        "et",
        "etc",
        "fig",
        "i.e",
        "jr",
        "mr",
        "mrs",
        "ms",
        "no",
        "p",
        "pp",
        "prof",
        "sec",
        "sr",
        "st",
        "vs",
        "v",
    }
)

_TERMINALS = ".!?"
_CLOSERS = "\"')]}’”"


@dataclass
class Chunk:
    """One retrievable passage of the corpus.

    The embedding is optional on load; stores fill it in and enforce a
    consistent dimension across the corpus.
    """

    doc_id: str
    text: str
    page: Optional[int] = None
    embedding: Optional[np.ndarray] = None
    index: Optional[int] = None

    def __post_init__(self) -> None:
        if not self.text or not self.text.strip():
            raise ValidationError(f"chunk {self.doc_id!r} has empty text")
        if self.embedding is not None:
            self.embedding = np.asarray(self.embedding, dtype=np.float64)

    def ref(self) -> str:
        if self.page is None:
            return self.doc_id
        return f"{self.doc_id} p.{self.page}"


@dataclass(frozen=True)
class SentenceVerdict:
    """Support decision for one answer sentence.

    The cosine route fills support_score and best_chunk; the LLM route
    fills label instead.  kept is the shared outcome.
    """

    sentence: str
    kept: bool
    support_score: Optional[float] = None
    label: Optional[str] = None
    best_chunk: Optional[str] = None


class EmbeddingProvider(Protocol):
    def embed(self, texts: Sequence[str]) -> List[np.ndarray]:
        """Embed a batch of texts into same-dimension vectors."""
        ...


class HashEmbedder:
    """Deterministic, network-free embedder for tests and offline runs.

    Each lowercase word hashes (via blake2b, so results are stable across
    processes and platforms) to a fixed pseudo-random unit vector; a text
    embeds to the normalized sum over its word multiset.  Texts sharing
    words land close together, which is all the demo pipelines need.
    """

    def __init__(self, dimension: int = 32, seed: int = 0) -> None:
        if dimension < 2:
            raise ValidationError("embedding dimension must be >= 2")
        self.dimension = dimension
        self.seed = seed
        self._word_cache: dict[str, np.ndarray] = {}

    def _word_vector(self, word: str) -> np.ndarray:
        cached = self._word_cache.get(word)
        if cached is None:
            digest = hashlib.blake2b(
                word.encode("utf-8"), key=str(self.seed).encode("ascii"), digest_size=8
            ).digest()
            rng = np.random.default_rng(int.from_bytes(digest, "big"))
            cached = rng.standard_normal(self.dimension)
            self._word_cache[word] = cached
        return cached

    def embed(self, texts: Sequence[str]) -> List[np.ndarray]:
        vectors = []
        for text in texts:
            words = re.findall(r"[a-z0-9']+", text.lower()) or ["<empty>"]
            total = np.zeros(self.dimension)
            for word in words:
                total = total + self._word_vector(word)
            norm = float(np.linalg.norm(total))
            if norm == 0.0:
                total = self._word_vector("<empty>").copy()
                norm = float(np.linalg.norm(total))
            vectors.append(total / norm)
        return vectors


def _preceding_token(text: str, period_index: int) -> str:
    start = period_index
    while start > 0 and not text[start - 1].isspace():
        start -= 1
    token = text[start:period_index]
    return token.lstrip("\"'([{‘“").lower()


def segment_sentences(text: str) -> List[str]:
    """Split text into sentences with a rule-based scanner.

    Splits after terminal punctuation (with trailing quotes/brackets
    attached) when followed by whitespace or end of text, unless the word
    before a period is a known abbreviation.  Decimal points never split
    because they are not followed by whitespace.  No characters outside
    whitespace are dropped, so the non-whitespace content of the input is
    preserved across the split.
    """
    sentences: List[str] = []
    start = 0
    i = 0
    n = len(text)
    while i < n:
        if text[i] in _TERMINALS:
            j = i + 1
            while j < n and text[j] in _TERMINALS + _CLOSERS:
                j += 1
            if j >= n or text[j].isspace():
                if text[i] == "." and _preceding_token(text, i) in _ABBREVIATIONS:
                    i += 1
                    continue
                piece = text[start:j].strip()
                if piece:
                    sentences.append(piece)
                start = j
                i = j
                continue
        i += 1
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between two vectors, clamped to [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1:
        raise SchemaError("cosine similarity expects 1-d vectors")
    if a.shape != b.shape:
        raise SchemaError(f"vector dimensions differ: {a.shape[0]} vs {b.shape[0]}")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise UndefinedSimilarityError("cosine similarity is undefined for a zero vector")
    value = float(np.dot(a, b) / (norm_a * norm_b))
    return max(-1.0, min(1.0, value))


def _chunk_embeddings(
    chunks: Sequence[Chunk], embedder: EmbeddingProvider
) -> List[np.ndarray]:
    vectors: List[Optional[np.ndarray]] = [chunk.embedding for chunk in chunks]
    missing = [i for i, vec in enumerate(vectors) if vec is None]
    if missing:
        try:
            computed = embedder.embed([chunks[i].text for i in missing])
        except Exception as exc:
            raise StageError(
                f"embedding provider failed on chunks: {exc}",
                stage_kind="hallucination_check",
            ) from exc
        for i, vec in zip(missing, computed):
            chunks[i].embedding = np.asarray(vec, dtype=np.float64)
            vectors[i] = chunks[i].embedding
    return [np.asarray(v, dtype=np.float64) for v in vectors]


def filter_response(
    response: str,
    chunks: Sequence[Chunk],
    embedder: EmbeddingProvider,
    threshold: float = DEFAULT_SUPPORT_THRESHOLD,
) -> Tuple[List[str], List[SentenceVerdict]]:
    """Cosine route: keep sentences whose best chunk score clears threshold.

    Every sentence is compared against every chunk; its support score is
    the maximum cosine similarity.  Returns the kept sentences in their
    original order plus one verdict per input sentence.
    """
    if not chunks:
        raise ValidationError("cannot filter a response against zero chunks")
    sentences = segment_sentences(response)
    if not sentences:
        return [], []
    chunk_vectors = _chunk_embeddings(chunks, embedder)
    verdicts: List[SentenceVerdict] = []
    kept: List[str] = []
    for position, sentence in enumerate(sentences):
        try:
            sentence_vector = embedder.embed([sentence])[0]
        except Exception as exc:
            raise StageError(
                f"embedding provider failed on sentence {position + 1}: {exc}",
                stage_kind="hallucination_check",
            ) from exc
        best_score = -1.0
        best_chunk: Optional[Chunk] = None
        for chunk, chunk_vector in zip(chunks, chunk_vectors):
            score = cosine_similarity(sentence_vector, chunk_vector)
            if score > best_score:
                best_score = score
                best_chunk = chunk
        keep = best_score >= threshold
        verdicts.append(
            SentenceVerdict(
                sentence=sentence,
                kept=keep,
                support_score=best_score,
                best_chunk=best_chunk.ref() if best_chunk is not None else None,
            )
        )
        if keep:
            kept.append(sentence)
    return kept, verdicts


def load_prompt_template(name: str = "hallucination_check", version: int = 1) -> str:
    """Load a versioned prompt template shipped as package config."""
    resource = resources.files("ragwatt").joinpath(f"config/{name}_v{version}.txt")
    try:
        return resource.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise SchemaError(f"no prompt template {name!r} version {version}") from None


_VERDICT_LINE = re.compile(r"^\s*(\d+)\s*[:.)\-]\s*(supported|unsupported)\b", re.IGNORECASE)


def parse_verdict_reply(reply: str, n_sentences: int) -> List[str]:
    """Parse "<n>:supported|unsupported" lines into labels, strictly.

    Every sentence index from 1 to n must receive exactly one verdict;
    anything else is a format error, never a silent keep.
    """
    labels: dict[int, str] = {}
    for line in reply.splitlines():
        if not line.strip():
            continue
        match = _VERDICT_LINE.match(line)
        if match is None:
            raise VerificationFormatError(
                f"unparseable verdict line: {line.strip()!r}",
                stage_kind="hallucination_check",
            )
        index = int(match.group(1))
        label = match.group(2).lower()
        if index < 1 or index > n_sentences:
            raise VerificationFormatError(
                f"verdict index {index} outside 1..{n_sentences}",
                stage_kind="hallucination_check",
            )
        if index in labels and labels[index] != label:
            raise VerificationFormatError(
                f"conflicting verdicts for sentence {index}",
                stage_kind="hallucination_check",
            )
        labels[index] = label
    missing = [i for i in range(1, n_sentences + 1) if i not in labels]
    if missing:
        raise VerificationFormatError(
            f"no verdict for sentence(s) {missing}",
            stage_kind="hallucination_check",
        )
    return [labels[i] for i in range(1, n_sentences + 1)]


def build_verification_prompt(sentences: Sequence[str], chunks: Sequence[Chunk]) -> str:
    template = load_prompt_template()
    sources = "\n".join(f"[{i + 1}] {chunk.text}" for i, chunk in enumerate(chunks))
    numbered = "\n".join(f"{i + 1}. {sentence}" for i, sentence in enumerate(sentences))
    return template.format(sources=sources, sentences=numbered)


def llm_hallucination_check(
    response: str,
    chunks: Sequence[Chunk],
    llm,
) -> Tuple[List[str], List[SentenceVerdict], str]:
    """LLM route: one supported/unsupported verdict per sentence.

    llm is any object with complete(prompt) returning a reply whose text
    holds the verdict lines.  Returns (kept sentences, verdicts, prompt)
    so callers can count prompt tokens off the timed path.  An empty
    response yields no verdicts and no model call.
    """
    sentences = segment_sentences(response)
    if not sentences:
        return [], [], ""
    prompt = build_verification_prompt(sentences, chunks)
    reply = llm.complete(prompt)
    text = reply.text if hasattr(reply, "text") else str(reply)
    labels = parse_verdict_reply(text, len(sentences))
    verdicts = [
        SentenceVerdict(sentence=sentence, kept=(label == "supported"), label=label)
        for sentence, label in zip(sentences, labels)
    ]
    kept = [v.sentence for v in verdicts if v.kept]
    return kept, verdicts, prompt
