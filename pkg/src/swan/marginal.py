"""Exact marginalization over segmentations and monotonic alignments.

All tables are natural-log float64 arrays. A SWAN lattice ``logp`` has shape
``(T', T + 1, L + 1)``: ``logp[t, j, l]`` is the log-probability that input
``t`` (0-based) emits ``y[j:j+l]`` followed by ``$``. Forward/backward tables
have shape ``(T' + 1, T + 1)`` and are indexed by the number of consumed
inputs, so ``alpha[0, 0] == 0`` and ``beta[T', T] == 0``.

The DP kernels come from the compiled ``_dp_ext`` module when it is built,
otherwise from ``_dp_py``. Set ``SWAN_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from . import _dp_py
from .core import InfeasibleError, Segmentation

NEG_INF = -math.inf

if os.environ.get("SWAN_PURE_PYTHON"):
    _kernels = _dp_py
else:
    try:
        from . import _dp_ext as _kernels
    except ImportError:  # extension not built
        _kernels = _dp_py

BACKEND = "cython" if _kernels is not _dp_py else "python"


def kernels(backend: str | None = None):
    """Return the kernel module for ``backend`` ("cython", "python" or None)."""
    if backend is None:
        return _kernels
    if backend == "python":
        return _dp_py
    if backend == "cython":
        from . import _dp_ext
        return _dp_ext
    raise ValueError(f"unknown backend {backend!r}")


def logsumexp(values) -> float:
    """Max-shifted log-sum-exp; empty input gives ``-inf``."""
    return float(_dp_py.logsumexp(list(values)))


@dataclass
class AlphaBeta:
    alpha: np.ndarray
    beta: np.ndarray

    @property
    def log_likelihood(self) -> float:
        return float(self.alpha[-1, -1])

    def check_partition(self, t: int) -> float:
        """log sum_j alpha_t(j) beta_t(j); equals the likelihood for every t."""
        return logsumexp(self.alpha[t] + self.beta[t])


def _shape(logp: np.ndarray, T: int | None, Tp: int | None, L: int | None):
    logp = np.asarray(logp, dtype=np.float64)
    if logp.ndim != 3:
        raise ValueError(f"lattice must be 3-d, got shape {logp.shape}")
    tp, t1, l1 = logp.shape
    T = t1 - 1 if T is None else T
    Tp = tp if Tp is None else Tp
    L = l1 - 1 if L is None else L
    if (Tp, T + 1) != (tp, t1) or L + 1 > l1:
        raise ValueError(f"lattice shape {logp.shape} does not match T={T}, T'={Tp}, L={L}")
    if L + 1 < l1:
        logp = np.ascontiguousarray(logp[:, :, :L + 1])
    return np.ascontiguousarray(logp), T, Tp, L


def forward(logp, T=None, Tp=None, L=None) -> np.ndarray:
    logp, T, Tp, L = _shape(logp, T, Tp, L)
    return _kernels.forward(logp, T, Tp, L)


def backward(logp, T=None, Tp=None, L=None) -> np.ndarray:
    logp, T, Tp, L = _shape(logp, T, Tp, L)
    return _kernels.backward(logp, T, Tp, L)


def alpha_beta(logp, T=None, Tp=None, L=None) -> AlphaBeta:
    logp, T, Tp, L = _shape(logp, T, Tp, L)
    return AlphaBeta(_kernels.forward(logp, T, Tp, L), _kernels.backward(logp, T, Tp, L))


def log_likelihood(alpha, beta=None) -> float:
    """``log p(y|x) = log alpha_{T'}(T)``.

    Accepts an :class:`AlphaBeta`, an ``(alpha, beta)`` pair, or a lattice.
    """
    if isinstance(alpha, AlphaBeta):
        return alpha.log_likelihood
    alpha = np.asarray(alpha)
    if alpha.ndim == 3:
        return float(forward(alpha)[-1, -1])
    return float(alpha[-1, -1])


def check_partition(ab: AlphaBeta, t: int) -> float:
    return ab.check_partition(t)


def gradient_weights(ab: AlphaBeta, logp) -> np.ndarray:
    """Posterior weight of each segment, ``w[t, j, l]``, shaped like the lattice.

    Raises ``InfeasibleError`` when the target has zero probability.
    """
    logp, T, Tp, _ = _shape(logp, ab.alpha.shape[1] - 1, ab.alpha.shape[0] - 1, None)
    L = logp.shape[2] - 1
    ll = ab.log_likelihood
    if ll == NEG_INF:
        raise InfeasibleError("infeasible target: log-likelihood is -inf")
    return _kernels.weights(ab.alpha, ab.beta, logp, T, Tp, L, ll)


def marginals(logp, T=None, Tp=None, L=None):
    """Forward, backward and weights in one call: ``(ll, ab, w)``."""
    logp, T, Tp, L = _shape(logp, T, Tp, L)
    alpha = _kernels.forward(logp, T, Tp, L)
    beta = _kernels.backward(logp, T, Tp, L)
    ll = float(alpha[Tp, T])
    if ll == NEG_INF:
        raise InfeasibleError("infeasible target: log-likelihood is -inf")
    return ll, AlphaBeta(alpha, beta), _kernels.weights(alpha, beta, logp, T, Tp, L, ll)


def best_segmentation(logp, y, T=None, Tp=None, L=None) -> tuple[Segmentation, float]:
    """Max-probability alignment of ``y`` (sum replaced by max in the forward pass).

    Ties prefer the shorter segment at each backpointer.
    """
    logp, T, Tp, L = _shape(logp, T if T is not None else len(y), Tp, L)
    score, lengths = _kernels.viterbi(logp, T, Tp, L)
    if score == NEG_INF:
        raise InfeasibleError(f"no segmentation of a length-{T} target over {Tp} inputs with L={L}")
    return Segmentation.from_lengths(list(y), lengths.tolist()), float(score)


def _shape1(logp1, T, L):
    logp1 = np.ascontiguousarray(logp1, dtype=np.float64)
    if logp1.ndim != 2:
        raise ValueError(f"Case I lattice must be 2-d, got shape {logp1.shape}")
    T = logp1.shape[0] - 1 if T is None else T
    L = logp1.shape[1] - 1 if L is None else L
    if logp1.shape[0] != T + 1 or logp1.shape[1] < L + 1:
        raise ValueError(f"Case I lattice shape {logp1.shape} does not match T={T}, L={L}")
    if T < 1:
        raise ValueError("Case I targets must be non-empty (empty segments are not permitted)")
    return np.ascontiguousarray(logp1[:, :L + 1]), T, L


def case1_log_likelihood(logp1, T=None, L=None) -> float:
    """Sum over all compositions of ``T`` into segments of length 1..L.

    ``logp1[j, l]`` scores segment ``y[j:j+l]`` plus ``$``; column 0 is ignored.
    """
    logp1, T, L = _shape1(logp1, T, L)
    return float(_kernels.case1_forward(logp1, T, L)[T])


def case1_backward(logp1, T=None, L=None) -> np.ndarray:
    logp1, T, L = _shape1(logp1, T, L)
    return _kernels.case1_backward(logp1, T, L)


def case1_forward(logp1, T=None, L=None) -> np.ndarray:
    logp1, T, L = _shape1(logp1, T, L)
    return _kernels.case1_forward(logp1, T, L)


def case1_best_segmentation(logp1, y, L=None) -> tuple[Segmentation, float]:
    logp1, T, L = _shape1(logp1, len(y), L)
    score, lengths = _kernels.case1_viterbi(logp1, T, L)
    if score == NEG_INF:
        raise InfeasibleError("Case I target has no segmentation")
    return Segmentation.from_lengths(list(y), lengths.tolist()), float(score)
