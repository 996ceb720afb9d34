"""Pure-Python log-space DP kernels (fallback for ``_dp_ext``).

Every kernel here has a statement-for-statement twin in ``_dp_ext.pyx``;
keep the two in step. Lattices are float64 arrays ``logp[t, j, l]``
(0-based input index ``t``) with ``-inf`` for absent segments.
"""
import math

import numpy as np

NEG_INF = -math.inf


def logsumexp(values):
    m = NEG_INF
    for v in values:
        if v > m:
            m = v
    if m == NEG_INF:
        return NEG_INF
    if m == math.inf:
        return math.inf
    s = 0.0
    for v in values:
        s += math.exp(v - m)
    return m + math.log(s)


def forward(logp, T, Tp, L):
    lp = logp.tolist()
    alpha = [[NEG_INF] * (T + 1) for _ in range(Tp + 1)]
    alpha[0][0] = 0.0
    for t in range(1, Tp + 1):
        prev, row, cur = alpha[t - 1], lp[t - 1], alpha[t]
        for j in range(T + 1):
            cand = [prev[j - l] + row[j - l][l] for l in range(min(L, j) + 1)]
            cur[j] = logsumexp(cand)
    return np.array(alpha, dtype=np.float64)


def backward(logp, T, Tp, L):
    lp = logp.tolist()
    beta = [[NEG_INF] * (T + 1) for _ in range(Tp + 1)]
    beta[Tp][T] = 0.0
    for t in range(Tp - 1, -1, -1):
        nxt, row, cur = beta[t + 1], lp[t], beta[t]
        for j in range(T + 1):
            cand = [nxt[j + l] + row[j][l] for l in range(min(L, T - j) + 1)]
            cur[j] = logsumexp(cand)
    return np.array(beta, dtype=np.float64)


def weights(alpha, beta, logp, T, Tp, L, ll):
    a, b, lp = alpha.tolist(), beta.tolist(), logp.tolist()
    w = np.zeros((Tp, T + 1, L + 1), dtype=np.float64)
    for t in range(Tp):
        for j in range(T + 1):
            if a[t][j] == NEG_INF:
                continue
            for l in range(min(L, T - j) + 1):
                v = a[t][j] + lp[t][j][l] + b[t + 1][j + l] - ll
                if v != NEG_INF:
                    w[t, j, l] = math.exp(v)
    return w


def viterbi(logp, T, Tp, L):
    """Max-product forward pass; returns ``(score, lengths)``.

    Ties go to the shorter segment at each backpointer.
    """
    lp = logp.tolist()
    delta = [[NEG_INF] * (T + 1) for _ in range(Tp + 1)]
    back = [[0] * (T + 1) for _ in range(Tp + 1)]
    delta[0][0] = 0.0
    for t in range(1, Tp + 1):
        prev, row = delta[t - 1], lp[t - 1]
        for j in range(T + 1):
            best, arg = NEG_INF, 0
            for l in range(min(L, j) + 1):
                v = prev[j - l] + row[j - l][l]
                if v > best:
                    best, arg = v, l
            delta[t][j] = best
            back[t][j] = arg
    score = delta[Tp][T]
    lengths = np.zeros(Tp, dtype=np.int64)
    if score == NEG_INF:
        return score, lengths
    j = T
    for t in range(Tp, 0, -1):
        lengths[t - 1] = back[t][j]
        j -= back[t][j]
    return score, lengths


def case1_forward(logp1, T, L):
    lp = logp1.tolist()
    A = [NEG_INF] * (T + 1)
    A[0] = 0.0
    for j in range(1, T + 1):
        cand = [A[j - l] + lp[j - l][l] for l in range(1, min(L, j) + 1)]
        A[j] = logsumexp(cand)
    return np.array(A, dtype=np.float64)


def case1_backward(logp1, T, L):
    lp = logp1.tolist()
    B = [NEG_INF] * (T + 1)
    B[T] = 0.0
    for j in range(T - 1, -1, -1):
        cand = [B[j + l] + lp[j][l] for l in range(1, min(L, T - j) + 1)]
        B[j] = logsumexp(cand)
    return np.array(B, dtype=np.float64)


def case1_viterbi(logp1, T, L):
    lp = logp1.tolist()
    delta = [NEG_INF] * (T + 1)
    back = [0] * (T + 1)
    delta[0] = 0.0
    for j in range(1, T + 1):
        best, arg = NEG_INF, 0
        for l in range(1, min(L, j) + 1):
            v = delta[j - l] + lp[j - l][l]
            if v > best:
                best, arg = v, l
        delta[j] = best
        back[j] = arg
    score = delta[T]
    if score == NEG_INF:
        return score, np.zeros(0, dtype=np.int64)
    lengths = []
    j = T
    while j > 0:
        lengths.append(back[j])
        j -= back[j]
    return score, np.array(lengths[::-1], dtype=np.int64)
