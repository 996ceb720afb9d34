"""Shared types: vocabularies, model configuration and segmentations.

The end-of-segment symbol ``$`` is never a vocabulary entry. It is the
extra softmax class with index ``V`` in every segment distribution.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

END = "$"


class SwanError(Exception):
    """Base class for library errors."""


class InfeasibleError(SwanError):
    """Raised when a target cannot be produced under the length cap."""


@dataclass(frozen=True)
class Vocab:
    tokens: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if len(self.tokens) < 1:
            raise ValueError("vocabulary must contain at least one token")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("vocabulary tokens must be unique")
        if END in self.tokens:
            raise ValueError(f"{END!r} is reserved for the end-of-segment class")
        for tok in self.tokens:
            if not tok or any(ch.isspace() for ch in tok):
                raise ValueError(f"invalid token {tok!r}")
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    @property
    def size(self) -> int:
        return len(self.tokens)

    @property
    def end_id(self) -> int:
        return len(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    def index(self, token: str) -> int:
        try:
            return self._index[token]
        except KeyError:
            raise KeyError(f"unknown token {token}") from None

    @classmethod
    def load(cls, path) -> "Vocab":
        """Read a vocabulary file: UTF-8, one token per line, line number = id."""
        text = Path(path).read_text(encoding="utf-8")
        return cls(tuple(line for line in text.splitlines() if line))

    def save(self, path) -> None:
        Path(path).write_text("".join(t + "\n" for t in self.tokens), encoding="utf-8")


def encode_tokens(text: Sequence[str], vocab: Vocab) -> list[int]:
    return [vocab.index(tok) for tok in text]


def decode_tokens(ids: Sequence[int], vocab: Vocab) -> list[str]:
    out = []
    for i in ids:
        if not 0 <= i < vocab.size:
            raise ValueError(f"token id {i} out of range for vocabulary of size {vocab.size}")
        out.append(vocab.tokens[i])
    return out


@dataclass(frozen=True)
class ModelConfig:
    """Sizes of the segment scorer.

    ``V`` output vocabulary size (without ``$``), ``d`` input feature size,
    ``H`` segment cell width, ``Hc`` connector cell width, ``L`` maximum
    segment length and ``E`` token embedding size. ``encoder`` is the width
    of an optional recurrent layer run over the raw inputs (0 disables it;
    when enabled the segment model sees features of width ``encoder``).
    """

    V: int
    d: int
    H: int = 16
    Hc: int = 8
    L: int = 3
    E: int = 8
    encoder: int = 0
    tie_embeddings: bool = True
    init_scale: float = 0.08

    def __post_init__(self):
        for name in ("V", "d", "H", "Hc", "L", "E"):
            if getattr(self, name) < 1:
                raise ValueError(f"ModelConfig.{name} must be >= 1")
        if self.encoder < 0:
            raise ValueError("ModelConfig.encoder must be >= 0")

    @property
    def feature_dim(self) -> int:
        return self.encoder if self.encoder else self.d

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown ModelConfig fields: {sorted(unknown)}")
        return cls(**data)


def feasible(cfg: ModelConfig, T: int, Tp: int | None = None, case: int = 2) -> bool:
    """Whether a length-``T`` target has nonzero mass.

    Case II needs ``T <= Tp * L``; Case I only forbids the empty target.
    """
    if case == 1:
        return T >= 1
    if Tp is None:
        raise ValueError("Case II feasibility needs the input length")
    return 0 <= T <= Tp * cfg.L


@dataclass(frozen=True)
class Segmentation:
    segments: tuple[tuple[int, ...], ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(tuple(s) for s in self.segments))

    @classmethod
    def from_lengths(cls, y: Sequence[int], lengths: Iterable[int]) -> "Segmentation":
        segs, pos = [], 0
        for n in lengths:
            segs.append(tuple(y[pos:pos + n]))
            pos += n
        if pos != len(y):
            raise ValueError("segment lengths do not cover the target")
        return cls(tuple(segs))

    @property
    def lengths(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.segments)

    def concat(self) -> list[int]:
        return [tok for seg in self.segments for tok in seg]

    def __len__(self) -> int:
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)


def validate_segmentation(seg: Segmentation, y: Sequence[int], L: int,
                          Tp: int | None = None, allow_empty: bool = True) -> None:
    """Raise ``ValueError`` unless ``seg`` is a valid segmentation of ``y``."""
    if seg.concat() != list(y):
        raise ValueError("segments do not concatenate to the target")
    for i, s in enumerate(seg.segments):
        if len(s) > L:
            raise ValueError(f"segment {i} has length {len(s)} > L={L}")
        if not allow_empty and not s:
            raise ValueError(f"segment {i} is empty")
    if Tp is not None and len(seg) != Tp:
        raise ValueError(f"expected {Tp} segments, got {len(seg)}")


def format_segmentation(seg: Segmentation, vocab: Vocab | None = None) -> str:
    """Bracketed rendering, one bracket per segment: ``[a b] [] [c]``."""
    parts = []
    for s in seg.segments:
        toks = decode_tokens(s, vocab) if vocab is not None else [str(i) for i in s]
        parts.append("[" + " ".join(toks) + "]")
    return " ".join(parts)
