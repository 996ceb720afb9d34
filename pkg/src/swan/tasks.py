"""Synthetic transduction tasks and the tab-separated dataset format.

A dataset file starts with one header line::

    # swan-dataset {"in_vocab": [...], "out_vocab": [...], ...}

followed by one example per line: ``input-tokens TAB output-tokens`` with an
optional third field holding the ground-truth segment lengths. Tokens are
separated by single spaces; an empty output field is a valid ``T = 0`` target.
"""
from __future__ import annotations

import json
import string
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import SwanError, Vocab, encode_tokens

HEADER_PREFIX = "# swan-dataset "
TASK_KINDS = ("grouped-copy", "duplicate-k", "rule-table")


@dataclass(frozen=True)
class SyntheticTaskSpec:
    kind: str = "grouped-copy"
    V: int = 6
    min_len: int = 2
    max_len: int = 8
    L: int = 3
    seed: int = 0
    rule_seed: int = 0
    k: int = 2
    rules: dict | None = None

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind {self.kind!r}; expected one of {TASK_KINDS}")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError("need 1 <= min_len <= max_len")


@dataclass
class Example:
    inputs: list[str]
    outputs: list[str]
    lengths: list[int] | None = None


@dataclass
class Dataset:
    in_vocab: Vocab
    out_vocab: Vocab
    examples: list[Example] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.examples)

    def features(self, ex: Example) -> np.ndarray:
        """One-hot input features, shape (T', |in_vocab|)."""
        ids = encode_tokens(ex.inputs, self.in_vocab)
        x = np.zeros((len(ids), self.in_vocab.size))
        x[np.arange(len(ids)), ids] = 1.0
        return x

    def targets(self, ex: Example) -> list[int]:
        return encode_tokens(ex.outputs, self.out_vocab)


def _symbol_names(n, upper):
    letters = string.ascii_uppercase if upper else string.ascii_lowercase
    if n <= len(letters):
        return [letters[i] for i in range(n)]
    return [("S" if upper else "t") + str(i) for i in range(n)]


def rule_table(spec: SyntheticTaskSpec) -> dict[str, list[str]]:
    """Emission rule: input symbol -> output token group."""
    ins = _symbol_names(spec.V, upper=True)
    outs = _symbol_names(spec.V, upper=False)
    if spec.kind == "rule-table":
        if not spec.rules:
            raise ValueError("rule-table tasks need explicit rules")
        table = {k: list(v) for k, v in spec.rules.items()}
    elif spec.kind == "duplicate-k":
        table = {a: [b] * spec.k for a, b in zip(ins, outs)}
    else:
        rng = np.random.default_rng(spec.rule_seed)
        table = {}
        for a in ins:
            n = int(rng.integers(0, spec.L + 1))
            table[a] = [outs[int(i)] for i in rng.integers(0, spec.V, size=n)]
    for sym, group in table.items():
        if len(group) > spec.L:
            raise SwanError(f"rule {sym} -> {' '.join(group)} is longer than L={spec.L}; "
                            "generated pairs would be infeasible")
    return table


def apply_rules(inputs, table):
    """``(outputs, segment lengths)`` for an input symbol sequence."""
    out, lengths = [], []
    for sym in inputs:
        group = table[sym]
        out.extend(group)
        lengths.append(len(group))
    return out, lengths


def generate_dataset(spec: SyntheticTaskSpec, n: int) -> Dataset:
    table = rule_table(spec)
    in_syms = sorted(table) if spec.kind == "rule-table" else _symbol_names(spec.V, upper=True)
    if spec.kind == "rule-table":
        out_syms = sorted({tok for g in table.values() for tok in g}) or ["a"]
    else:
        out_syms = _symbol_names(spec.V, upper=False)
    rng = np.random.default_rng(spec.seed)
    examples = []
    for _ in range(n):
        length = int(rng.integers(spec.min_len, spec.max_len + 1))
        inputs = [in_syms[int(i)] for i in rng.integers(0, len(in_syms), size=length)]
        outputs, lengths = apply_rules(inputs, table)
        examples.append(Example(inputs, outputs, lengths))
    meta = {
        "version": 1,
        "task": spec.kind,
        "L": spec.L,
        "seed": spec.seed,
        "rule_seed": spec.rule_seed,
        "rules": {k: " ".join(v) for k, v in sorted(table.items())},
    }
    return Dataset(Vocab(tuple(in_syms)), Vocab(tuple(out_syms)), examples, meta)


def dumps_dataset(ds: Dataset) -> str:
    header = dict(ds.meta)
    header["in_vocab"] = list(ds.in_vocab.tokens)
    header["out_vocab"] = list(ds.out_vocab.tokens)
    lines = [HEADER_PREFIX + json.dumps(header, sort_keys=True)]
    for ex in ds.examples:
        fields = [" ".join(ex.inputs), " ".join(ex.outputs)]
        if ex.lengths is not None:
            fields.append(" ".join(map(str, ex.lengths)))
        lines.append("\t".join(fields))
    return "\n".join(lines) + "\n"


def save_dataset(ds: Dataset, path) -> None:
    Path(path).write_text(dumps_dataset(ds), encoding="utf-8")


def load_dataset(path) -> Dataset:
    """Parse a dataset file. Without a header the vocabularies are inferred."""
    text = Path(path).read_text(encoding="utf-8")
    header, examples = None, []
    for lineno, line in enumerate(text.splitlines(), 1):
        if line.startswith(HEADER_PREFIX) and lineno == 1:
            header = json.loads(line[len(HEADER_PREFIX):])
            continue
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) not in (2, 3):
            raise SwanError(f"{path}:{lineno}: expected 2 or 3 tab-separated fields")
        inputs, outputs = parts[0].split(), parts[1].split()
        lengths = None
        if len(parts) == 3 and parts[2].strip():
            lengths = [int(v) for v in parts[2].split()]
            if len(lengths) != len(inputs) or sum(lengths) != len(outputs):
                raise SwanError(f"{path}:{lineno}: segment lengths do not match the example")
        if not inputs:
            raise SwanError(f"{path}:{lineno}: empty input sequence")
        examples.append(Example(inputs, outputs, lengths))
    if header is not None:
        in_vocab, out_vocab = Vocab(tuple(header["in_vocab"])), Vocab(tuple(header["out_vocab"]))
        meta = {k: v for k, v in header.items() if k not in ("in_vocab", "out_vocab")}
    else:
        in_vocab = Vocab(tuple(sorted({s for ex in examples for s in ex.inputs})))
        out_vocab = Vocab(tuple(sorted({s for ex in examples for s in ex.outputs}) or ["a"]))
        meta = {}
    ds = Dataset(in_vocab, out_vocab, examples, meta)
    for lineno, ex in enumerate(examples, 1):
        for tok in ex.inputs:
            if tok not in in_vocab._index:
                raise SwanError(f"{path}: example {lineno}: unknown input symbol {tok}")
        for tok in ex.outputs:
            if tok not in out_vocab._index:
                raise SwanError(f"{path}: example {lineno}: unknown output token {tok}")
    return ds
