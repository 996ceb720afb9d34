"""Timing of the shared-prefix lattice against per-segment passes, and of the DP kernels."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import marginal
from .core import ModelConfig
from .model import SegmentScorerParams, _build_rows, naive_segment_lattice, segment_lattice
from .selftest import table_diff

DEFAULT_SIZES = ((16, 8, 2, 16), (32, 8, 4, 32), (64, 16, 8, 32))


@dataclass
class LatticeBench:
    T: int
    Tp: int
    L: int
    H: int
    naive_s: float
    shared_s: float
    naive_passes: int
    shared_passes: int
    naive_steps: int
    shared_steps: int
    max_diff: float

    @property
    def speedup(self):
        return self.naive_s / self.shared_s if self.shared_s > 0 else float("inf")


def _best_time(fn, repeats):
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_lattice(T, Tp, L, H=32, V=8, d=8, repeats=3, seed=0) -> LatticeBench:
    """Best-of-``repeats`` wall time of both lattice builds plus pass counts.

    A pass is one recurrent run started for some ``(t, j)`` (shared) or
    ``(t, j, l)`` (naive); steps count GRU cell applications per input row.
    """
    rng = np.random.default_rng(seed)
    cfg = ModelConfig(V=V, d=d, H=H, Hc=max(4, H // 2), L=L, E=16)
    params = SegmentScorerParams.init(cfg, seed=seed)
    x = rng.normal(size=(Tp, d))
    y = [int(v) for v in rng.integers(0, V, size=T)]
    naive_s, naive = _best_time(lambda: naive_segment_lattice(x, y, params), repeats)
    shared_s, shared = _best_time(lambda: segment_lattice(x, y, params).logp, repeats)
    rn = _build_rows([x], [y], L, naive=True, V=V)
    rs = _build_rows([x], [y], L, naive=False, V=V)
    return LatticeBench(T, Tp, L, H, naive_s, shared_s, rn.n, rs.n, int(rn.nsteps.sum()),
                        int(rs.nsteps.sum()), table_diff(naive, shared))


def bench_kernels(T, Tp, L, repeats=5, seed=0):
    """Forward + backward + weights on a random lattice, per available backend."""
    rng = np.random.default_rng(seed)
    logp = np.log(rng.uniform(0.01, 1.0, size=(Tp, T + 1, L + 1)))
    out = {}
    backends = ["python"] + (["cython"] if marginal.BACKEND == "cython" else [])
    for name in backends:
        k = marginal.kernels(name)

        def run():
            a = k.forward(logp, T, Tp, L)
            b = k.backward(logp, T, Tp, L)
            return k.weights(a, b, logp, T, Tp, L, float(a[Tp, T]))

        out[name] = _best_time(run, repeats)[0]
    return out


def parse_sizes(text: str):
    """``"T,Tp,L,H;..."`` -> list of 4-tuples."""
    sizes = []
    for part in text.split(";"):
        if part.strip():
            vals = tuple(int(v) for v in part.split(","))
            if len(vals) != 4:
                raise ValueError(f"size {part!r} must be T,Tp,L,H")
            sizes.append(vals)
    return sizes


def run_bench(sizes=DEFAULT_SIZES, repeats=3, seed=0, kernels=True) -> str:
    lines = ["T\tTp\tL\tH\tnaive_s\tshared_s\tspeedup\tnaive_passes\tshared_passes"
             "\tnaive_steps\tshared_steps\tmax_abs_diff"]
    for T, Tp, L, H in sizes:
        r = bench_lattice(T, Tp, L, H, repeats=repeats, seed=seed)
        lines.append(f"{T}\t{Tp}\t{L}\t{H}\t{r.naive_s:.4f}\t{r.shared_s:.4f}\t{r.speedup:.2f}"
                     f"\t{r.naive_passes}\t{r.shared_passes}\t{r.naive_steps}\t{r.shared_steps}"
                     f"\t{r.max_diff:.2e}")
    if kernels:
        lines.append("")
        lines.append("T\tTp\tL\tpython_s\tcython_s\tspeedup")
        for T, Tp, L, _ in sizes:
            k = bench_kernels(T, Tp, L, seed=seed)
            cy = k.get("cython")
            cy_txt = f"{cy:.5f}\t{k['python'] / cy:.1f}" if cy else "n/a\tn/a"
            lines.append(f"{T}\t{Tp}\t{L}\t{k['python']:.5f}\t{cy_txt}")
    return "\n".join(lines) + "\n"
