"""Brute-force references for certifying the DP, gradients and decoder.

Nothing here is used in training. Segment scores are computed one segment at
a time with fresh recurrent passes; only the GRU/softmax cell arithmetic is
shared with :mod:`swan.model`.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import Segmentation, SwanError
from .model import SegmentScorerParams, gru_step, log_softmax
from .model import log_likelihood as dp_log_likelihood

DEFAULT_CAP = 10 ** 6


class EnumerationCapError(SwanError):
    pass


@dataclass(frozen=True)
class EnumerationSpec:
    T: int
    Tp: int = 1
    L: int = 1
    allow_empty: bool = True
    cap: int = DEFAULT_CAP


def count_segmentations(spec: EnumerationSpec) -> int:
    """Number of valid segmentations, by a counting DP over compositions."""
    T, L = spec.T, spec.L
    if spec.allow_empty:
        ways = [1] + [0] * T
        for _ in range(spec.Tp):
            ways = [sum(ways[j - l] for l in range(0, min(L, j) + 1)) for j in range(T + 1)]
        return ways[T]
    if T == 0:
        return 0
    ways = [1] + [0] * T
    for j in range(1, T + 1):
        ways[j] = sum(ways[j - l] for l in range(1, min(L, j) + 1))
    return ways[T]


def _compositions(T, parts, L, lo):
    if parts == 0:
        if T == 0:
            yield ()
        return
    for first in range(lo, min(L, T) + 1):
        for rest in _compositions(T - first, parts - 1, L, lo):
            yield (first,) + rest


def _free_compositions(T, L):
    if T == 0:
        yield ()
        return
    for first in range(1, min(L, T) + 1):
        for rest in _free_compositions(T - first, L):
            yield (first,) + rest


def enumerate_segmentations(spec: EnumerationSpec, y=None):
    """All segment-length tuples (or :class:`Segmentation` objects when ``y`` is given).

    Case II (``allow_empty``) yields exactly ``Tp`` parts in ``[0, L]``;
    Case I yields any number of parts in ``[1, L]``. Refuses to run when the
    count exceeds ``spec.cap``.
    """
    n = count_segmentations(spec)
    if n > spec.cap:
        raise EnumerationCapError(f"{n} segmentations exceed the cap of {spec.cap}")
    if spec.allow_empty:
        out = list(_compositions(spec.T, spec.Tp, spec.L, 0))
    else:
        out = list(_free_compositions(spec.T, spec.L)) if spec.T > 0 else []
    if y is None:
        return out
    return [Segmentation.from_lengths(list(y), c) for c in out]


def _lse(values):
    values = list(values)
    if not values:
        return -math.inf
    m = max(values)
    if m == -math.inf:
        return -math.inf
    return m + math.log(math.fsum(math.exp(v - m) for v in values))


class _SegmentScorer:
    """Independent per-segment evaluation of ``log p(segment, $ | x_t, y[:j])``."""

    def __init__(self, params: SegmentScorerParams):
        self.p = params
        self.cfg = params.cfg

    def connector(self, prefix):
        P, cfg = self.p, self.cfg
        table = P["emb"] if cfg.tie_embeddings else P["con_emb"]
        c = np.zeros((1, cfg.Hc), dtype=P.dtype)
        for tok in prefix:
            gi = table[tok][None, :] @ P["con_W"] + P["con_b"]
            c, _ = gru_step(gi, c, P["con_U"])
        return c

    def segment(self, x_t, prefix, seg):
        P, cfg = self.p, self.cfg
        x_t = np.asarray(x_t, dtype=P.dtype)[None, :]
        c = self.connector(prefix)
        h = np.tanh(x_t @ P["init_x"] + c @ P["init_c"] + P["init_b"])
        total = 0.0
        inputs = [cfg.V] + list(seg)
        emits = list(seg) + [cfg.V]
        for tok_in, tok_out in zip(inputs, emits):
            step_in = np.concatenate([P["emb"][tok_in][None, :], x_t], axis=1)
            h, _ = gru_step(step_in @ P["seg_W"] + P["seg_b"], h, P["seg_U"])
            total += float(log_softmax(h @ P["out_W"] + P["out_b"])[0, tok_out])
        return total


def segmentation_logprob(x, y, lengths, params: SegmentScorerParams, case: int = 2) -> float:
    """Log-probability of one segmentation given by its segment lengths."""
    scorer = _SegmentScorer(params)
    x = np.asarray(x)
    total, j = 0.0, 0
    for t, l in enumerate(lengths):
        x_t = x[t] if case == 2 else x.reshape(-1)
        total += scorer.segment(x_t, y[:j], y[j:j + l])
        j += l
    return total


def brute_force_likelihood(x, y, params: SegmentScorerParams, case: int = 2,
                           cap: int = DEFAULT_CAP) -> float:
    """``log p(y|x)`` as a literal sum over enumerated segmentations."""
    y = list(map(int, y))
    x = np.asarray(x)
    if case == 2:
        spec = EnumerationSpec(len(y), len(x), params.cfg.L, True, cap)
    else:
        if not y:
            raise ValueError("Case I targets must be non-empty")
        spec = EnumerationSpec(len(y), 1, params.cfg.L, False, cap)
    scorer = _SegmentScorer(params)
    memo = {}
    terms = []
    for comp in enumerate_segmentations(spec):
        total, j = 0.0, 0
        for t, l in enumerate(comp):
            key = (t if case == 2 else 0, j, l)
            if key not in memo:
                x_t = x[t] if case == 2 else x.reshape(-1)
                memo[key] = scorer.segment(x_t, y[:j], y[j:j + l])
            total += memo[key]
            j += l
        terms.append(total)
    return _lse(terms)


def brute_force_lattice_likelihood(logp, T, Tp, L):
    """Sum over segmentations of a given Case II lattice."""
    terms = []
    for comp in enumerate_segmentations(EnumerationSpec(T, Tp, L, True)):
        j, total = 0, 0.0
        for t, l in enumerate(comp):
            total += logp[t][j][l]
            j += l
        terms.append(total)
    return _lse(terms)


def brute_force_best(logp, T, Tp, L):
    """Argmax segmentation of a lattice by enumeration; ``(lengths, score)``."""
    best, arg = -math.inf, None
    for comp in enumerate_segmentations(EnumerationSpec(T, Tp, L, True)):
        j, total = 0, 0.0
        for t, l in enumerate(comp):
            total += logp[t][j][l]
            j += l
        if arg is None or total > best:
            best, arg = total, comp
    return arg, best


def brute_force_case1_likelihood(logp1, T, L):
    terms = []
    for comp in enumerate_segmentations(EnumerationSpec(T, 1, L, False)):
        j, total = 0, 0.0
        for l in comp:
            total += logp1[j][l]
            j += l
        terms.append(total)
    return _lse(terms)


def all_outputs(V, max_len):
    """Every token sequence over ``range(V)`` with length ``0..max_len``, shortest first."""
    for n in range(max_len + 1):
        yield from itertools.product(range(V), repeat=n)


def exhaustive_decode(x, params: SegmentScorerParams, score=None):
    """Global argmax over all outputs of length ``<= T' * L``.

    ``score(x, y)`` defaults to the exact marginal log-likelihood; ties go to
    the lexicographically smaller output. Returns ``(output, log-prob)``.
    """
    score = score or dp_log_likelihood
    best, arg = -math.inf, None
    for y in all_outputs(params.cfg.V, len(x) * params.cfg.L):
        s = score(x, list(y), params)
        if arg is None or s > best or (s == best and list(y) < list(arg)):
            best, arg = s, y
    return list(arg), best


def total_mass(x, params: SegmentScorerParams, score=None) -> float:
    """Sum of ``p(y|x)`` over every output of length ``<= T' * L``."""
    score = score or dp_log_likelihood
    return math.fsum(math.exp(score(x, list(y), params))
                     for y in all_outputs(params.cfg.V, len(x) * params.cfg.L))


def finite_diff_gradient(loss, theta, step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``loss`` at array ``theta``."""
    if step <= 0:
        raise ValueError("step must be positive")
    theta = np.array(theta, dtype=np.float64)
    grad = np.zeros_like(theta)
    flat, gflat = theta.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = loss(theta)
        flat[i] = orig - step
        down = loss(theta)
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * step)
    return grad


def param_finite_diff(loss, params: SegmentScorerParams, step: float = 1e-5) -> dict[str, np.ndarray]:
    """Finite-difference gradient of ``loss(params)`` split per tensor."""
    vec = params.vector()
    g = finite_diff_gradient(lambda v: loss(params.with_vector(v)), vec, step)
    out, pos = {}, 0
    for k, v in params.items():
        out[k] = g[pos:pos + v.size].reshape(v.shape)
        pos += v.size
    return out
