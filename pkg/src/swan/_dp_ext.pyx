# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled log-space DP kernels; twin of ``_dp_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

cnp.import_array()


def logsumexp(values):
    cdef double[::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef Py_ssize_t i, n = v.shape[0]
    cdef double m = -INFINITY, s = 0.0
    for i in range(n):
        if v[i] > m:
            m = v[i]
    if m == -INFINITY:
        return -INFINITY
    if m == INFINITY:
        return INFINITY
    for i in range(n):
        s += exp(v[i] - m)
    return m + log(s)


def forward(logp, int T, int Tp, int L):
    cdef double[:, :, ::1] lp = np.ascontiguousarray(logp, dtype=np.float64)
    out = np.full((Tp + 1, T + 1), -INFINITY, dtype=np.float64)
    cdef double[:, ::1] alpha = out
    cdef int t, j, l, lmax
    cdef double m, s, v
    alpha[0, 0] = 0.0
    for t in range(1, Tp + 1):
        for j in range(T + 1):
            lmax = L if L < j else j
            m = -INFINITY
            for l in range(lmax + 1):
                v = alpha[t - 1, j - l] + lp[t - 1, j - l, l]
                if v > m:
                    m = v
            if m == -INFINITY:
                alpha[t, j] = -INFINITY
                continue
            s = 0.0
            for l in range(lmax + 1):
                s += exp(alpha[t - 1, j - l] + lp[t - 1, j - l, l] - m)
            alpha[t, j] = m + log(s)
    return out


def backward(logp, int T, int Tp, int L):
    cdef double[:, :, ::1] lp = np.ascontiguousarray(logp, dtype=np.float64)
    out = np.full((Tp + 1, T + 1), -INFINITY, dtype=np.float64)
    cdef double[:, ::1] beta = out
    cdef int t, j, l, lmax
    cdef double m, s, v
    beta[Tp, T] = 0.0
    for t in range(Tp - 1, -1, -1):
        for j in range(T + 1):
            lmax = L if L < T - j else T - j
            m = -INFINITY
            for l in range(lmax + 1):
                v = beta[t + 1, j + l] + lp[t, j, l]
                if v > m:
                    m = v
            if m == -INFINITY:
                beta[t, j] = -INFINITY
                continue
            s = 0.0
            for l in range(lmax + 1):
                s += exp(beta[t + 1, j + l] + lp[t, j, l] - m)
            beta[t, j] = m + log(s)
    return out


def weights(alpha, beta, logp, int T, int Tp, int L, double ll):
    cdef double[:, ::1] a = np.ascontiguousarray(alpha, dtype=np.float64)
    cdef double[:, ::1] b = np.ascontiguousarray(beta, dtype=np.float64)
    cdef double[:, :, ::1] lp = np.ascontiguousarray(logp, dtype=np.float64)
    out = np.zeros((Tp, T + 1, L + 1), dtype=np.float64)
    cdef double[:, :, ::1] w = out
    cdef int t, j, l, lmax
    cdef double v
    for t in range(Tp):
        for j in range(T + 1):
            if a[t, j] == -INFINITY:
                continue
            lmax = L if L < T - j else T - j
            for l in range(lmax + 1):
                v = a[t, j] + lp[t, j, l] + b[t + 1, j + l] - ll
                if v != -INFINITY:
                    w[t, j, l] = exp(v)
    return out


def viterbi(logp, int T, int Tp, int L):
    cdef double[:, :, ::1] lp = np.ascontiguousarray(logp, dtype=np.float64)
    dout = np.full((Tp + 1, T + 1), -INFINITY, dtype=np.float64)
    bout = np.zeros((Tp + 1, T + 1), dtype=np.int64)
    cdef double[:, ::1] delta = dout
    cdef long long[:, ::1] back = bout
    cdef int t, j, l, lmax, arg
    cdef double best, v
    delta[0, 0] = 0.0
    for t in range(1, Tp + 1):
        for j in range(T + 1):
            lmax = L if L < j else j
            best = -INFINITY
            arg = 0
            for l in range(lmax + 1):
                v = delta[t - 1, j - l] + lp[t - 1, j - l, l]
                if v > best:
                    best = v
                    arg = l
            delta[t, j] = best
            back[t, j] = arg
    score = delta[Tp, T]
    lengths = np.zeros(Tp, dtype=np.int64)
    if score == -INFINITY:
        return score, lengths
    j = T
    for t in range(Tp, 0, -1):
        lengths[t - 1] = back[t, j]
        j -= back[t, j]
    return score, lengths


def case1_forward(logp1, int T, int L):
    cdef double[:, ::1] lp = np.ascontiguousarray(logp1, dtype=np.float64)
    out = np.full(T + 1, -INFINITY, dtype=np.float64)
    cdef double[::1] A = out
    cdef int j, l, lmax
    cdef double m, s, v
    A[0] = 0.0
    for j in range(1, T + 1):
        lmax = L if L < j else j
        m = -INFINITY
        for l in range(1, lmax + 1):
            v = A[j - l] + lp[j - l, l]
            if v > m:
                m = v
        if m == -INFINITY:
            continue
        s = 0.0
        for l in range(1, lmax + 1):
            s += exp(A[j - l] + lp[j - l, l] - m)
        A[j] = m + log(s)
    return out


def case1_backward(logp1, int T, int L):
    cdef double[:, ::1] lp = np.ascontiguousarray(logp1, dtype=np.float64)
    out = np.full(T + 1, -INFINITY, dtype=np.float64)
    cdef double[::1] B = out
    cdef int j, l, lmax
    cdef double m, s, v
    B[T] = 0.0
    for j in range(T - 1, -1, -1):
        lmax = L if L < T - j else T - j
        m = -INFINITY
        for l in range(1, lmax + 1):
            v = B[j + l] + lp[j, l]
            if v > m:
                m = v
        if m == -INFINITY:
            continue
        s = 0.0
        for l in range(1, lmax + 1):
            s += exp(B[j + l] + lp[j, l] - m)
        B[j] = m + log(s)
    return out


def case1_viterbi(logp1, int T, int L):
    cdef double[:, ::1] lp = np.ascontiguousarray(logp1, dtype=np.float64)
    dout = np.full(T + 1, -INFINITY, dtype=np.float64)
    bout = np.zeros(T + 1, dtype=np.int64)
    cdef double[::1] delta = dout
    cdef long long[::1] back = bout
    cdef int j, l, lmax, arg
    cdef double best, v
    delta[0] = 0.0
    for j in range(1, T + 1):
        lmax = L if L < j else j
        best = -INFINITY
        arg = 0
        for l in range(1, lmax + 1):
            v = delta[j - l] + lp[j - l, l]
            if v > best:
                best = v
                arg = l
        delta[j] = best
        back[j] = arg
    score = delta[T]
    if score == -INFINITY:
        return score, np.zeros(0, dtype=np.int64)
    lengths = []
    j = T
    while j > 0:
        lengths.append(back[j])
        j -= back[j]
    return score, np.array(lengths[::-1], dtype=np.int64)
