"""Token counting and timing primitives.

Durations come from a monotonic clock and are the quantity the power
model bills; token counts are descriptive statistics and are always
computed after a stage completes, never inside the timed section.

Two counting modes exist and are never silently exchanged:

* "approximate": ceil(characters / chars_per_token), tokenizer-free.
* "exact_bpe": byte-pair encoding against a referenced merge table.
  The bundled table (config/minibpe_vocab.json) is trained on the
  bundled corpus by scripts/train_bpe_vocab.py.
"""

from __future__ import annotations

import base64
import json
import math
import re
import time
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from importlib import resources
from pathlib import Path
from typing import Iterable, List, Optional, Tuple

from .errors import ConfigurationError, MeasurementError, SchemaError

__all__ = [
    "TokenizerSpec",
    "TokenCount",
    "BpeVocabulary",
    "load_vocabulary",
    "bundled_vocab_path",
    "count_tokens",
    "now_monotonic",
    "elapsed",
    "utc_now",
    "SimulatedClock",
]

_MODES = ("approximate", "exact_bpe")

# Whitespace runs and non-whitespace runs alternate, so this split is
# lossless and BPE merges never cross a word boundary.
_PIECE_RE = re.compile(r"\s+|\S+")

VOCAB_FORMAT = "ragwatt-bpe"
VOCAB_VERSION = 1


@dataclass(frozen=True)
class TokenizerSpec:
    """How token counts are produced for run records.

    Attributes:
        tokenizer_id: label recorded alongside counts.
        mode: "approximate" or "exact_bpe".
        vocab_ref: path to a merge-table JSON; required in exact mode.
        chars_per_token: divisor for the approximate mode.
    """

    tokenizer_id: str = "chars-div-4"
    mode: str = "approximate"
    vocab_ref: Optional[str] = None
    chars_per_token: float = 4.0

    def __post_init__(self) -> None:
        if self.mode not in _MODES:
            raise ConfigurationError(
                f"unknown token counting mode {self.mode!r}; expected one of {_MODES}"
            )
        if self.mode == "exact_bpe" and not self.vocab_ref:
            raise ConfigurationError(
                "exact_bpe mode requires vocab_ref; approximate counting must be "
                "chosen explicitly, not fallen back to"
            )
        if self.chars_per_token <= 0:
            raise ConfigurationError("chars_per_token must be > 0")

    @classmethod
    def approximate(cls, chars_per_token: float = 4.0) -> "TokenizerSpec":
        return cls(tokenizer_id=f"chars-div-{chars_per_token:g}", chars_per_token=chars_per_token)

    @classmethod
    def exact(cls, vocab_ref: str | Path, tokenizer_id: Optional[str] = None) -> "TokenizerSpec":
        ref = str(vocab_ref)
        return cls(
            tokenizer_id=tokenizer_id or Path(ref).stem,
            mode="exact_bpe",
            vocab_ref=ref,
        )


@dataclass(frozen=True)
class TokenCount:
    """A token count flagged with the mode that produced it."""

    count: int
    mode: str
    tokenizer_id: str

    def __int__(self) -> int:
        return self.count


class BpeVocabulary:
    """A byte-pair merge table: pairs of byte strings ranked by priority."""

    def __init__(self, name: str, merges: Iterable[Tuple[bytes, bytes]]) -> None:
        self.name = name
        self.ranks: dict[Tuple[bytes, bytes], int] = {}
        for rank, pair in enumerate(merges):
            self.ranks[pair] = rank

    def __len__(self) -> int:
        return len(self.ranks)

    def encode_piece(self, piece: bytes) -> List[bytes]:
        """Apply merges to one piece: always the lowest-ranked pair first."""
        tokens = [piece[i : i + 1] for i in range(len(piece))]
        while len(tokens) > 1:
            best_rank = None
            best_index = -1
            for i in range(len(tokens) - 1):
                rank = self.ranks.get((tokens[i], tokens[i + 1]))
                if rank is not None and (best_rank is None or rank < best_rank):
                    best_rank = rank
                    best_index = i
            if best_rank is None:
                break
            tokens[best_index : best_index + 2] = [
                tokens[best_index] + tokens[best_index + 1]
            ]
        return tokens

    def encode(self, text: str) -> List[bytes]:
        tokens: List[bytes] = []
        for piece in _PIECE_RE.findall(text):
            tokens.extend(self.encode_piece(piece.encode("utf-8")))
        return tokens


_VOCAB_CACHE: dict[str, BpeVocabulary] = {}


def load_vocabulary(path: str | Path) -> BpeVocabulary:
    """Load a merge table from its JSON file, with a small process cache."""
    key = str(path)
    cached = _VOCAB_CACHE.get(key)
    if cached is not None:
        return cached
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigurationError(f"tokenizer vocabulary not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"tokenizer vocabulary {path} is not valid JSON: {exc}") from exc
    if raw.get("format") != VOCAB_FORMAT:
        raise SchemaError(f"unexpected vocabulary format {raw.get('format')!r} in {path}")
    if raw.get("version") != VOCAB_VERSION:
        raise SchemaError(
            f"vocabulary version {raw.get('version')!r} in {path}; expected {VOCAB_VERSION}"
        )
    merges = [
        (base64.b64decode(left), base64.b64decode(right)) for left, right in raw["merges"]
    ]
    vocab = BpeVocabulary(raw.get("name", Path(key).stem), merges)
    _VOCAB_CACHE[key] = vocab
    return vocab


def bundled_vocab_path() -> Path:
    """Path of the merge table shipped with the package."""
    return Path(resources.files("ragwatt").joinpath("config/minibpe_vocab.json"))


def count_tokens(text: str, spec: TokenizerSpec) -> TokenCount:
    """Count tokens in text under the given spec; empty text counts zero."""
    if spec.mode == "approximate":
        count = math.ceil(len(text) / spec.chars_per_token)
        return TokenCount(count=count, mode=spec.mode, tokenizer_id=spec.tokenizer_id)
    vocab = load_vocabulary(spec.vocab_ref)
    return TokenCount(count=len(vocab.encode(text)), mode=spec.mode, tokenizer_id=spec.tokenizer_id)


def now_monotonic() -> float:
    """Current monotonic time in seconds; only differences are meaningful."""
    return time.perf_counter()


def elapsed(start: float, end: float) -> float:
    """Duration between two monotonic readings taken in order."""
    if end < start:
        raise MeasurementError(
            f"end reading {end!r} precedes start reading {start!r}; "
            "durations must come from one monotonic clock"
        )
    return end - start


def utc_now() -> datetime:
    """Wall-clock timestamp for labeling records; never used for durations."""
    return datetime.now(timezone.utc)


class SimulatedClock:
    """Deterministic clock pair for synthetic and replayed runs.

    The monotonic reading only moves via advance(); the wall reading is
    epoch + elapsed and may be repositioned with jump_to() without
    disturbing monotonic time.
    """

    def __init__(self, epoch: Optional[datetime] = None) -> None:
        if epoch is None:
            epoch = datetime(2026, 1, 5, tzinfo=timezone.utc)
        if epoch.tzinfo is None:
            raise MeasurementError("simulated epoch must be timezone-aware")
        self._epoch = epoch
        self._elapsed = 0.0

    def now(self) -> float:
        return self._elapsed

    def advance(self, seconds: float) -> None:
        if seconds < 0:
            raise MeasurementError("cannot advance a monotonic clock backwards")
        self._elapsed += seconds

    def wall_now(self) -> datetime:
        return self._epoch + timedelta(seconds=self._elapsed)

    def jump_to(self, moment: datetime) -> None:
        if moment.tzinfo is None:
            raise MeasurementError("wall-clock targets must be timezone-aware")
        self._epoch = moment - timedelta(seconds=self._elapsed)
