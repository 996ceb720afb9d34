"""Seeded oracle checks on tiny instances, run by ``swan selftest``.

The report contains no timings, so a fixed seed gives identical bytes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import marginal
from .core import ModelConfig, SwanError
from .decoder import beam_search
from .model import (SegmentScorerParams, batch_backward, batch_lattice, case1_lattice,
                    log_likelihood, naive_segment_lattice, segment_lattice)
from .oracle import (brute_force_case1_likelihood, brute_force_likelihood, exhaustive_decode,
                     param_finite_diff, total_mass)


@dataclass
class SelftestReport:
    lines: list = field(default_factory=list)
    ok: bool = True

    def record(self, name, passed, detail):
        self.ok &= bool(passed)
        self.lines.append(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")

    def text(self):
        status = "all checks passed" if self.ok else "FAILED"
        return "\n".join(self.lines + [f"selftest: {status}"]) + "\n"


def random_params(cfg: ModelConfig, seed: int, scale: float = 0.6) -> SegmentScorerParams:
    rng = np.random.default_rng(seed)
    p = SegmentScorerParams.init(cfg, seed=seed)
    return p.with_vector(rng.uniform(-scale, scale, size=p.size))


def random_instance(rng, max_T=6, max_Tp=4, max_L=3, max_V=3, d=2):
    V = int(rng.integers(1, max_V + 1))
    L = int(rng.integers(1, max_L + 1))
    Tp = int(rng.integers(1, max_Tp + 1))
    T = int(rng.integers(0, min(max_T, Tp * L) + 1))
    cfg = ModelConfig(V=V, d=d, H=3, Hc=2, L=L, E=2)
    x = rng.normal(size=(Tp, d))
    y = [int(v) for v in rng.integers(0, V, size=T)]
    return cfg, x, y


def uniform_params(V, L, d=2):
    cfg = ModelConfig(V=V, d=d, H=3, Hc=2, L=L, E=2)
    p = random_params(cfg, 0)
    p["out_W"][:] = 0.0
    p["out_b"][:] = 0.0
    return p


def relative_error(a, b):
    a, b = np.ravel(a), np.ravel(b)
    num = float(np.linalg.norm(a - b))
    den = float(np.linalg.norm(a) + np.linalg.norm(b))
    return 0.0 if num == 0.0 else num / max(den, 1e-12)


def table_diff(a, b) -> float:
    """Max abs difference of two log tables; ``inf`` if their supports differ."""
    a, b = np.asarray(a), np.asarray(b)
    fin = np.isfinite(a)
    if not np.array_equal(fin, np.isfinite(b)) or not np.array_equal(a[~fin], b[~fin]):
        return math.inf
    return float(np.max(np.abs(a[fin] - b[fin]))) if fin.any() else 0.0


def dump_case(x, y, seed):
    """Compact rendering of a failing instance for the report."""
    xs = np.array2string(np.asarray(x), precision=6, separator=",", max_line_width=10**6)
    return f" [params seed {seed}, y={list(y)}, x={xs.replace(chr(10), '')}]"


def gradient_check(x, y, params: SegmentScorerParams, step=1e-5, raw=False):
    """Per-tensor relative error of analytic vs central-difference gradients.

    Returns ``{name: rel_err}`` including ``"x"`` for the input gradient.
    Raises ``NonFiniteError`` naming the tensor if any parameter is not finite.
    """
    params.check()

    def ll(p, xx=x):
        blat = batch_lattice([xx], [y], p, raw=raw)
        return float(marginal.forward(blat.lattices[0].logp)[-1, -1])

    blat = batch_lattice([x], [y], params, raw=raw)
    _, _, w = marginal.marginals(blat.lattices[0].logp)
    grads, dxs = batch_backward(blat, [w], params)
    num = param_finite_diff(ll, params, step)
    errs = {k: relative_error(grads[k], num[k]) for k in grads}
    numx = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[i] += step
        xm[i] -= step
        numx[i] = (ll(params, xp) - ll(params, xm)) / (2 * step)
    errs["x"] = relative_error(dxs[0], numx)
    return errs


def gradient_instances(n, seed):
    """Seeded tiny gradient-check problems covering every parameter group."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        variant = i % 4
        V = int(rng.integers(2, 4))
        L = int(rng.integers(1, 4))
        Tp = int(rng.integers(1, 4))
        T = int(rng.integers(1, min(5, Tp * L) + 1))
        cfg = ModelConfig(V=V, d=2, H=3, Hc=2, L=L, E=2,
                          encoder=3 if variant == 2 else 0,
                          tie_embeddings=variant != 3)
        p = random_params(cfg, seed * 1000 + i)
        x = rng.normal(size=(Tp, 2))
        y = [int(v) for v in rng.integers(0, V, size=T)]
        out.append((x, y, p, cfg.encoder > 0, seed * 1000 + i))
    return out


def run_selftest(seed: int = 0, n_dp: int = 60, n_grad: int = 6, n_dec: int = 10,
                 inject_nan: str | None = None) -> SelftestReport:
    rep = SelftestReport()
    rng = np.random.default_rng(seed)

    names = ("dp-vs-enumeration", "partition-identity", "weight-normalization",
             "shared-vs-naive-lattice")
    tols = (1e-10, 1e-10, 1e-9, 1e-12)
    worst = {k: (0.0, "") for k in names}
    for i in range(n_dp):
        cfg, x, y = random_instance(rng)
        p = random_params(cfg, seed + i)
        lat = segment_lattice(x, y, p)
        ab = marginal.alpha_beta(lat.logp)
        parts = [ab.check_partition(t) for t in range(len(x) + 1)]
        w = marginal.gradient_weights(ab, lat.logp)
        errs = (abs(ab.log_likelihood - brute_force_likelihood(x, y, p)),
                max(parts) - min(parts),
                float(np.max(np.abs(w.sum(axis=(1, 2)) - 1.0))),
                table_diff(lat.logp, naive_segment_lattice(x, y, p)))
        for k, e in zip(names, errs):
            if e > worst[k][0]:
                worst[k] = (e, dump_case(x, y, seed + i))
    labels = (f"{n_dp} instances, max |diff|", "max spread over t", "max |sum_t w - 1|", "max |diff|")
    for k, tol, label in zip(names, tols, labels):
        e, case = worst[k]
        rep.record(k, e <= tol, f"{label} {e:.2e}" + ("" if e <= tol else case))

    up = uniform_params(2, 2)
    x2 = np.zeros((2, 2))
    v = math.exp(log_likelihood(x2, [0, 1], up))
    rep.record("uniform-case2", abs(v - 1 / 27) <= 1e-12, f"p = {v:.15f} (1/27)")
    up3 = uniform_params(2, 3)
    v1 = math.exp(marginal.case1_log_likelihood(case1_lattice(np.zeros(2), [0, 1, 1], up3)))
    rep.record("uniform-case1", abs(v1 - 16 / 729) <= 1e-12, f"p = {v1:.15f} (16/729)")
    mass = total_mass(x2, up)
    rep.record("truncated-mass", abs(mass - 361 / 729) <= 1e-10, f"sum = {mass:.15f} (361/729)")
    lat1 = case1_lattice(rng.normal(size=2), [0, 1, 0, 1], random_params(ModelConfig(V=2, d=2, L=2), seed))
    c1 = marginal.case1_log_likelihood(lat1)
    b1 = brute_force_case1_likelihood(lat1, 4, 2)
    rep.record("case1-vs-enumeration", abs(c1 - b1) <= 1e-10, f"|diff| {abs(c1 - b1):.2e}")

    worst_g, worst_name, worst_case = 0.0, "-", ""
    failure = None
    instances = gradient_instances(max(n_grad, 4 if inject_nan else 0), seed)
    if inject_nan is not None:
        if not any(inject_nan in inst[2].tensors for inst in instances):
            raise SwanError(f"no tensor named {inject_nan!r}")
        # a poisoned tensor must be caught on the first instance that has it
        instances = [inst for inst in instances if inject_nan in inst[2].tensors]
        instances[0][2][inject_nan].flat[0] = np.nan
    for k, (x, y, p, raw, pseed) in enumerate(instances):
        try:
            errs = gradient_check(x, y, p, raw=raw)
        except SwanError as exc:
            failure = f"instance {k}: {exc}" + dump_case(x, y, pseed)
            break
        name = max(errs, key=errs.get)
        if errs[name] > worst_g:
            worst_g, worst_name, worst_case = errs[name], name, dump_case(x, y, pseed)
    if failure:
        rep.record("gradients-vs-finite-differences", False, failure)
    else:
        rep.record("gradients-vs-finite-differences", worst_g <= 1e-4,
                   f"{n_grad} instances, worst tensor {worst_name} rel err {worst_g:.2e}"
                   + ("" if worst_g <= 1e-4 else worst_case))

    agree, miss = 0, ""
    for i in range(n_dec):
        cfg = ModelConfig(V=2, d=2, H=4, Hc=3, L=2, E=3)
        pseed = 7000 + seed * 100 + i
        p = random_params(cfg, pseed, scale=1.5)
        x = rng.normal(size=(2, 2))
        got, want = beam_search(x, p, B=64)[0], exhaustive_decode(x, p)[0]
        agree += got == want
        if got != want and not miss:
            miss = f" [beam {got} vs exhaustive {want}]" + dump_case(x, want, pseed)
    rep.record("decoder-vs-exhaustive", agree == n_dec, f"{agree}/{n_dec} argmax matches" + miss)

    if marginal.BACKEND == "cython":
        py, cy = marginal.kernels("python"), marginal.kernels("cython")
        worst_k = 0.0
        for i in range(20):
            Tp, T, L = 3, 5, 2
            logp = np.log(rng.uniform(0.01, 1.0, size=(Tp, T + 1, L + 1)))
            for fn in ("forward", "backward"):
                a = getattr(py, fn)(logp, T, Tp, L)
                b = getattr(cy, fn)(logp, T, Tp, L)
                worst_k = max(worst_k, table_diff(a, b))
        rep.record("cython-vs-python-kernels", worst_k <= 1e-12, f"max |diff| {worst_k:.2e}")
    else:
        rep.record("cython-vs-python-kernels", True, "extension not built; python kernels only")
    return rep
