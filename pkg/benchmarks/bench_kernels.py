"""Compiled vs pure-Python DP kernels (forward + backward + weights + Viterbi).

Usage: python3 benchmarks/bench_kernels.py [--repeats N]
"""
import argparse
import time

import numpy as np

from swan import marginal

SIZES = [(8, 4, 2), (32, 8, 4), (64, 16, 8), (128, 32, 8)]


def lattice(T, Tp, L, rng):
    logp = np.log(rng.uniform(0.01, 1.0, size=(Tp, T + 1, L + 1)))
    for j in range(T + 1):
        logp[:, j, min(L, T - j) + 1:] = -np.inf
    return logp


def timeit(k, logp, T, Tp, L, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        a = k.forward(logp, T, Tp, L)
        b = k.backward(logp, T, Tp, L)
        w = k.weights(a, b, logp, T, Tp, L, float(a[Tp, T]))
        k.viterbi(logp, T, Tp, L)
        best = min(best, time.perf_counter() - t0)
    return best, w


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"default backend: {marginal.BACKEND}")
    print("T\tTp\tL\tpython_s\tcython_s\tspeedup\tmax_abs_diff")
    for T, Tp, L in SIZES:
        logp = lattice(T, Tp, L, rng)
        tp, wp = timeit(marginal.kernels("python"), logp, T, Tp, L, args.repeats)
        if marginal.BACKEND != "cython":
            print(f"{T}\t{Tp}\t{L}\t{tp:.5f}\tn/a\tn/a\tn/a")
            continue
        tc, wc = timeit(marginal.kernels("cython"), logp, T, Tp, L, args.repeats)
        print(f"{T}\t{Tp}\t{L}\t{tp:.5f}\t{tc:.5f}\t{tp / tc:.1f}\t{np.max(np.abs(wp - wc)):.1e}")


if __name__ == "__main__":
    main()
