"""Training with the exact marginal likelihood, plus evaluation metrics."""
from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import InfeasibleError, ModelConfig, SwanError
from .decoder import beam_search
from .marginal import best_segmentation, marginals
from .model import (NonFiniteError, SegmentScorerParams, batch_backward, batch_lattice, encode,
                    save_checkpoint)
from .tasks import Dataset

log = logging.getLogger(__name__)


class TrainingAborted(SwanError):
    pass


@dataclass
class TrainConfig:
    optimizer: str = "adam"
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 10
    clip: float = 5.0
    seed: int = 0
    checkpoint: str | None = None
    metrics: str | None = None
    L: int = 3
    H: int = 64
    Hc: int = 32
    E: int = 16
    encoder: int = 0
    tie_embeddings: bool = True
    init_scale: float = 0.08
    beam: int = 4
    dev_fraction: float = 0.1
    dtype: str = "float64"
    target_accuracy: float | None = None

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.dtype not in ("float64", "float32"):
            raise ValueError("dtype must be float64 or float32")

    @classmethod
    def from_file(cls, path, **overrides) -> "TrainConfig":
        data = json.loads(Path(path).read_text()) if path else {}
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)

    def model_config(self, V: int, d: int) -> ModelConfig:
        return ModelConfig(V=V, d=d, H=self.H, Hc=self.Hc, L=self.L, E=self.E,
                           encoder=self.encoder, tie_embeddings=self.tie_embeddings,
                           init_scale=self.init_scale)


class Adam:
    def __init__(self, params: SegmentScorerParams, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = params.zeros_like()
        self.v = params.zeros_like()
        self.t = 0

    def step(self, params: SegmentScorerParams, grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            params[k] -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(params[k].dtype)


class SGD:
    def __init__(self, params, lr=1e-3):
        self.lr = lr

    def step(self, params, grads):
        for k, g in grads.items():
            params[k] -= (self.lr * g).astype(params[k].dtype)


def clip_global_norm(grads, max_norm):
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for g in grads.values():
            g *= scale
    return norm


def check_feasible(ds: Dataset, L: int, name="dataset"):
    for i, ex in enumerate(ds.examples, 1):
        if len(ex.outputs) > len(ex.inputs) * L:
            raise InfeasibleError(
                f"{name} example {i}: output length {len(ex.outputs)} exceeds "
                f"{len(ex.inputs)} inputs x L={L}")


def batch_nll_and_grads(xs, ys, params: SegmentScorerParams, raw=True):
    """Mean NLL over a batch and its gradient (ascent on log-likelihood negated)."""
    blat = batch_lattice(xs, ys, params, raw=raw)
    lls, ws = [], []
    for lat in blat.lattices:
        ll, _, w = marginals(lat.logp)
        lls.append(ll)
        ws.append(w)
    grads, _ = batch_backward(blat, ws, params)
    scale = -1.0 / len(xs)
    for g in grads.values():
        g *= scale
    return -float(np.mean(lls)), grads


def levenshtein(a, b) -> int:
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i] + [0] * len(b)
        for j, cb in enumerate(b, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb))
        prev = cur
    return prev[-1]


@dataclass
class EvalReport:
    n: int
    nll: float
    seq_acc: float
    edit_rate: float
    avg_seg_len: float
    seg_recovery: float | None
    hyps: list

    def as_dict(self):
        d = dataclasses.asdict(self)
        d.pop("hyps")
        return d


def evaluate(params: SegmentScorerParams, ds: Dataset, beam: int = 4, batch_size: int = 64,
             decode: bool = True) -> EvalReport:
    """NLL, exact-sequence accuracy, token edit rate, average segment length.

    Average segment length counts only non-empty segments of the max-probability
    segmentation of each reference.
    """
    if params.cfg.V != ds.out_vocab.size or params.cfg.d != ds.in_vocab.size:
        raise SwanError(f"vocabulary mismatch: model V={params.cfg.V}, d={params.cfg.d}; "
                        f"dataset V={ds.out_vocab.size}, d={ds.in_vocab.size}")
    nll_sum, correct, edits, ref_tokens = 0.0, 0, 0, 0
    seg_tokens, seg_count, recovered, with_truth = 0, 0, 0, 0
    hyps = []
    exs = ds.examples
    for start in range(0, len(exs), batch_size):
        chunk = exs[start:start + batch_size]
        raw = [ds.features(ex) for ex in chunk]
        ys = [ds.targets(ex) for ex in chunk]
        feats, _ = encode(raw, params)
        blat = batch_lattice(feats, ys, params)
        for ex, x, y, lat in zip(chunk, feats, ys, blat.lattices):
            ll = float(marginals(lat.logp)[0])
            nll_sum -= ll
            seg, _ = best_segmentation(lat.logp, y)
            seg_tokens += len(y)
            seg_count += sum(1 for s in seg.segments if s)
            if ex.lengths is not None:
                with_truth += 1
                recovered += list(seg.lengths) == list(ex.lengths)
            if decode:
                out, _ = beam_search(x, params, B=beam)
                hyps.append(out)
                correct += out == y
                edits += levenshtein(out, y)
                ref_tokens += len(y)
    n = len(exs)
    return EvalReport(
        n=n,
        nll=nll_sum / n if n else float("nan"),
        seq_acc=correct / n if n and decode else float("nan"),
        edit_rate=edits / max(ref_tokens, 1) if decode else float("nan"),
        avg_seg_len=seg_tokens / seg_count if seg_count else 0.0,
        seg_recovery=recovered / with_truth if with_truth else None,
        hyps=hyps,
    )


def split_dev(ds: Dataset, fraction: float, seed: int):
    rng = np.random.default_rng(seed + 7919)
    idx = rng.permutation(len(ds))
    n_dev = max(1, int(round(len(ds) * fraction))) if len(ds) > 1 else 0
    dev = [ds.examples[i] for i in sorted(idx[:n_dev])]
    train = [ds.examples[i] for i in sorted(idx[n_dev:])]
    mk = lambda exs: Dataset(ds.in_vocab, ds.out_vocab, exs, ds.meta)
    return mk(train), mk(dev)


def format_metrics(epoch, nll, report: EvalReport | None):
    if report is None:
        return f"{epoch}\t{nll:.6f}\tnan\tnan\tnan"
    return (f"{epoch}\t{nll:.6f}\t{report.seq_acc:.4f}\t{report.edit_rate:.4f}"
            f"\t{report.avg_seg_len:.4f}")


def train(config: TrainConfig, train_ds: Dataset, dev_ds: Dataset | None = None,
          params: SegmentScorerParams | None = None, on_epoch=None):
    """Minimise mean NLL with minibatch Adam/SGD.

    Writes a checkpoint and a metrics line (``epoch NLL dev_acc edit_rate
    avg_seg_len``, tab-separated) after every epoch. Returns ``(params,
    history)``. A non-finite loss aborts training; the checkpoint on disk is
    then the last good one.
    """
    check_feasible(train_ds, config.L, "training")
    if dev_ds is not None:
        check_feasible(dev_ds, config.L, "dev")
    if train_ds.in_vocab != (dev_ds or train_ds).in_vocab or \
            train_ds.out_vocab != (dev_ds or train_ds).out_vocab:
        raise SwanError("training and dev vocabularies differ")
    dtype = np.float32 if config.dtype == "float32" else np.float64
    if params is None:
        cfg = config.model_config(train_ds.out_vocab.size, train_ds.in_vocab.size)
        params = SegmentScorerParams.init(cfg, seed=config.seed, dtype=dtype)
    opt = Adam(params, lr=config.lr) if config.optimizer == "adam" else SGD(params, lr=config.lr)
    rng = np.random.default_rng(config.seed)
    xs_all = [train_ds.features(ex) for ex in train_ds.examples]
    ys_all = [train_ds.targets(ex) for ex in train_ds.examples]
    meta = {"in_vocab": list(train_ds.in_vocab.tokens), "out_vocab": list(train_ds.out_vocab.tokens)}
    metrics_fh = open(config.metrics, "w", encoding="utf-8") if config.metrics else None
    history = []
    try:
        for epoch in range(1, config.epochs + 1):
            order = rng.permutation(len(xs_all))
            total, count = 0.0, 0
            for start in range(0, len(order), config.batch_size):
                idx = order[start:start + config.batch_size]
                try:
                    loss, grads = batch_nll_and_grads([xs_all[i] for i in idx], [ys_all[i] for i in idx], params)
                except NonFiniteError as exc:
                    raise TrainingAborted(f"epoch {epoch}, batch {start // config.batch_size}: {exc}") from exc
                if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                    raise TrainingAborted(f"non-finite loss at epoch {epoch}, batch {start // config.batch_size}")
                clip_global_norm(grads, config.clip)
                opt.step(params, grads)
                total += loss * len(idx)
                count += len(idx)
            nll = total / max(count, 1)
            report = evaluate(params, dev_ds, beam=config.beam) if dev_ds is not None and len(dev_ds) else None
            line = format_metrics(epoch, nll, report)
            history.append({"epoch": epoch, "nll": nll, **(report.as_dict() if report else {})})
            if metrics_fh:
                metrics_fh.write(line + "\n")
                metrics_fh.flush()
            if config.checkpoint:
                save_checkpoint(config.checkpoint, params, dict(meta, epoch=epoch))
            log.info("epoch %s", line)
            if on_epoch:
                on_epoch(epoch, line)
            if (config.target_accuracy is not None and report is not None
                    and report.seq_acc >= config.target_accuracy):
                break
    finally:
        if metrics_fh:
            metrics_fh.close()
    return params, history
