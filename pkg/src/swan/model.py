"""Neural segment scorer with manual backpropagation.

Each segment is scored by a GRU whose initial state is
``tanh(x_t @ init_x + c_j @ init_c + init_b)``, where ``c_j`` is the state of
a separate connector GRU after reading ``y[:j]``. The segment GRU reads a
begin-of-segment embedding (row ``V`` of ``emb``) and then the segment's own
tokens, with ``x_t`` appended to every step's input. Step ``s`` predicts
``y[j+s]`` or ``$`` over ``V + 1`` classes.

One recurrent pass over the longest admissible segment starting at ``j``
yields the log-probabilities of all shorter segments as well. In the
backward pass the softmax at step ``s`` is weighted by the total posterior
mass of the segments that reach it, so a single pass per ``(t, j)`` covers
every segment length.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import InfeasibleError, ModelConfig, SwanError, feasible
from .marginal import forward, marginals

CHECKPOINT_FORMAT = "swan-checkpoint-v1"


class NonFiniteError(SwanError):
    pass


# ---------------------------------------------------------------- cell math

def sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def log_softmax(logits):
    m = logits.max(axis=-1, keepdims=True)
    z = logits - m
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def gru_step(gi, h, U):
    """One GRU step; ``gi`` already holds ``input @ W + b`` (gates r, z, n)."""
    H = h.shape[-1]
    gh = h @ U
    r = sigmoid(gi[..., :H] + gh[..., :H])
    z = sigmoid(gi[..., H:2 * H] + gh[..., H:2 * H])
    hn = gh[..., 2 * H:]
    n = np.tanh(gi[..., 2 * H:] + r * hn)
    h_new = (1.0 - z) * n + z * h
    return h_new, (h, r, z, n, hn)


def gru_step_backward(dh_new, cache, U):
    """Returns ``(d gi, d h, d U)`` for one step."""
    h, r, z, n, hn = cache
    dn = dh_new * (1.0 - z)
    dan = dn * (1.0 - n * n)
    dar = dan * hn * r * (1.0 - r)
    daz = dh_new * (h - n) * z * (1.0 - z)
    dgi = np.concatenate([dar, daz, dan], axis=-1)
    dgh = np.concatenate([dar, daz, dan * r], axis=-1)
    return dgi, dh_new * z + dgh @ U.T, h.T @ dgh


# ---------------------------------------------------------------- parameters

def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    V, E, H, Hc, F = cfg.V, cfg.E, cfg.H, cfg.Hc, cfg.feature_dim
    shapes = {
        "emb": (V + 1, E),
        "seg_W": (E + F, 3 * H),
        "seg_U": (H, 3 * H),
        "seg_b": (3 * H,),
        "out_W": (H, V + 1),
        "out_b": (V + 1,),
        "con_W": (E, 3 * Hc),
        "con_U": (Hc, 3 * Hc),
        "con_b": (3 * Hc,),
        "init_c": (Hc, H),
        "init_x": (F, H),
        "init_b": (H,),
    }
    if not cfg.tie_embeddings:
        shapes["con_emb"] = (V, E)
    if cfg.encoder:
        G = cfg.encoder
        shapes.update(enc_W=(cfg.d, 3 * G), enc_U=(G, 3 * G), enc_b=(3 * G,))
    return shapes


@dataclass
class SegmentScorerParams:
    cfg: ModelConfig
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def init(cls, cfg: ModelConfig, seed: int = 0, dtype=np.float64) -> "SegmentScorerParams":
        rng = np.random.default_rng(seed)
        s = cfg.init_scale
        tensors = {name: rng.uniform(-s, s, size=shape).astype(dtype)
                   for name, shape in param_shapes(cfg).items()}
        return cls(cfg, tensors)

    @classmethod
    def zeros(cls, cfg: ModelConfig, dtype=np.float64) -> "SegmentScorerParams":
        return cls(cfg, {n: np.zeros(s, dtype=dtype) for n, s in param_shapes(cfg).items()})

    def __getitem__(self, name):
        return self.tensors[name]

    def __setitem__(self, name, value):
        self.tensors[name] = value

    def __iter__(self):
        return iter(self.tensors)

    def items(self):
        return self.tensors.items()

    @property
    def dtype(self):
        return self.tensors["emb"].dtype

    @property
    def size(self) -> int:
        return sum(a.size for a in self.tensors.values())

    def copy(self) -> "SegmentScorerParams":
        return SegmentScorerParams(self.cfg, {k: v.copy() for k, v in self.tensors.items()})

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.tensors.items()}

    def astype(self, dtype) -> "SegmentScorerParams":
        return SegmentScorerParams(self.cfg, {k: v.astype(dtype) for k, v in self.tensors.items()})

    def vector(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.tensors.values()])

    def with_vector(self, vec) -> "SegmentScorerParams":
        out, pos = {}, 0
        for k, v in self.tensors.items():
            out[k] = np.asarray(vec[pos:pos + v.size], dtype=v.dtype).reshape(v.shape)
            pos += v.size
        return SegmentScorerParams(self.cfg, out)

    def check(self) -> None:
        """Raise unless every tensor has the configured shape and finite values."""
        expected = param_shapes(self.cfg)
        if set(expected) != set(self.tensors):
            raise SwanError(f"parameter names {sorted(self.tensors)} != {sorted(expected)}")
        for name, shape in expected.items():
            arr = self.tensors[name]
            if arr.shape != shape:
                raise SwanError(f"tensor {name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise NonFiniteError(f"tensor {name} contains non-finite values")


def save_checkpoint(path, params: SegmentScorerParams, meta: dict | None = None) -> None:
    """Write an ``.npz`` container; see docs/checkpoint.md for the layout."""
    arrays = {f"param/{k}": v for k, v in params.items()}
    arrays["__format__"] = np.array(CHECKPOINT_FORMAT)
    arrays["__config__"] = np.array(params.cfg.to_json())
    arrays["__meta__"] = np.array(json.dumps(meta or {}, sort_keys=True))
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        np.savez(fh, **arrays)
    tmp.replace(path)


def load_checkpoint(path) -> tuple[SegmentScorerParams, dict]:
    with np.load(path, allow_pickle=False) as data:
        fmt = str(data["__format__"]) if "__format__" in data else None
        if fmt != CHECKPOINT_FORMAT:
            raise SwanError(f"{path}: not a {CHECKPOINT_FORMAT} file (found {fmt!r})")
        cfg = ModelConfig.from_dict(json.loads(str(data["__config__"])))
        meta = json.loads(str(data["__meta__"]))
        tensors = {k[len("param/"):]: data[k].copy() for k in data.files if k.startswith("param/")}
    params = SegmentScorerParams(cfg, {k: tensors[k] for k in param_shapes(cfg)})
    params.check()
    return params, meta


# ------------------------------------------------------- recurrent sequences

def _run_sequence(gi, U, h0):
    """GRU over padded inputs ``gi`` (K, S, 3H); returns states (K, S+1, H)."""
    K, S, _ = gi.shape
    states = np.empty((K, S + 1, h0.shape[-1]), dtype=gi.dtype)
    states[:, 0] = h0
    caches = []
    for s in range(S):
        states[:, s + 1], c = gru_step(gi[:, s], states[:, s], U)
        caches.append(c)
    return states, caches


def _run_sequence_backward(dstates, caches, U):
    """Backprop (K, S+1, H) state gradients; returns ``(d gi, dU)``."""
    K, S1, H = dstates.shape
    dgi = np.zeros((K, S1 - 1, 3 * H), dtype=dstates.dtype)
    dU = np.zeros_like(U)
    carry = np.zeros((K, H), dtype=dstates.dtype)
    for s in range(S1 - 2, -1, -1):
        dgi[:, s], carry, dUs = gru_step_backward(dstates[:, s + 1] + carry, caches[s], U)
        dU += dUs
    return dgi, dU


def _pad_tokens(ys, width):
    out = np.zeros((len(ys), width), dtype=np.int64)
    for k, y in enumerate(ys):
        out[k, :len(y)] = y
    return out


def connector_states(y, params: SegmentScorerParams) -> np.ndarray:
    """States ``c[0..T]`` of the connector network over ``y`` (shape (T+1, Hc))."""
    states, _ = _connector_forward([list(y)], params)
    return states[0, :len(y) + 1]


def _connector_forward(ys, params):
    table = params["emb"] if params.cfg.tie_embeddings else params["con_emb"]
    Tmax = max(len(y) for y in ys)
    toks = _pad_tokens(ys, Tmax)
    gi = table[toks] @ params["con_W"] + params["con_b"]
    h0 = np.zeros((len(ys), params.cfg.Hc), dtype=params.dtype)
    states, caches = _run_sequence(gi, params["con_U"], h0)
    return states, (toks, caches)


def _connector_backward(dstates, cache, params, grads):
    toks, caches = cache
    dgi, dU = _run_sequence_backward(dstates, caches, params["con_U"])
    grads["con_U"] += dU
    table_name = "emb" if params.cfg.tie_embeddings else "con_emb"
    table = params[table_name]
    flat = dgi.reshape(-1, dgi.shape[-1])
    grads["con_b"] += flat.sum(axis=0)
    grads["con_W"] += table[toks].reshape(-1, table.shape[1]).T @ flat
    np.add.at(grads[table_name], toks.ravel(), flat @ params["con_W"].T)


def encode(raw_xs, params: SegmentScorerParams):
    """Features seen by the segment model; identity unless an encoder is configured."""
    if not params.cfg.encoder:
        return [np.asarray(x, dtype=params.dtype) for x in raw_xs], None
    lens = [len(x) for x in raw_xs]
    S = max(lens)
    raw = np.zeros((len(raw_xs), S, params.cfg.d), dtype=params.dtype)
    for k, x in enumerate(raw_xs):
        raw[k, :len(x)] = x
    gi = raw @ params["enc_W"] + params["enc_b"]
    h0 = np.zeros((len(raw_xs), params.cfg.encoder), dtype=params.dtype)
    states, caches = _run_sequence(gi, params["enc_U"], h0)
    feats = [states[k, 1:n + 1] for k, n in enumerate(lens)]
    return feats, (raw, lens, caches)


def encode_backward(dfeats, cache, params, grads):
    """Accumulate encoder gradients; returns dL/d raw inputs."""
    if cache is None:
        return dfeats
    raw, lens, caches = cache
    K, S, _ = raw.shape
    dstates = np.zeros((K, S + 1, params.cfg.encoder), dtype=params.dtype)
    for k, n in enumerate(lens):
        dstates[k, 1:n + 1] = dfeats[k]
    dgi, dU = _run_sequence_backward(dstates, caches, params["enc_U"])
    grads["enc_U"] += dU
    flat = dgi.reshape(-1, dgi.shape[-1])
    grads["enc_b"] += flat.sum(axis=0)
    grads["enc_W"] += raw.reshape(-1, raw.shape[-1]).T @ flat
    draw = dgi @ params["enc_W"].T
    return [draw[k, :n] for k, n in enumerate(lens)]


# ---------------------------------------------------------- segment passes

@dataclass
class _Rows:
    """One recurrent pass per row, sorted so that longer passes come first."""
    ex: np.ndarray
    t: np.ndarray
    j: np.ndarray
    nsteps: np.ndarray
    xrow: np.ndarray
    crow: np.ndarray
    tokens: np.ndarray   # input token at each step (BOS first)
    targets: np.ndarray  # token predicted at each step (meaningful while s < nsteps - 1)
    active: list         # number of live rows at each step

    @property
    def n(self):
        return len(self.ex)


def _build_rows(xs, ys, L, naive=False, V=0):
    Tmax = max(len(y) for y in ys)
    Smax = L + 1
    ypad = np.zeros((len(ys), Tmax + Smax + 1), dtype=np.int64)
    for k, y in enumerate(ys):
        ypad[k, :len(y)] = y
    ex, tt, jj, ns = [], [], [], []
    xoff = np.cumsum([0] + [len(x) for x in xs])
    for k, (x, y) in enumerate(zip(xs, ys)):
        Tp, T = len(x), len(y)
        j = np.arange(T + 1)
        lmax = np.minimum(L, T - j)
        if naive:
            jl = [(jv, l) for jv in range(T + 1) for l in range(lmax[jv] + 1)]
            j = np.array([a for a, _ in jl], dtype=np.int64)
            steps = np.array([b + 1 for _, b in jl], dtype=np.int64)
        else:
            steps = lmax + 1
        ex.append(np.full(Tp * len(j), k))
        tt.append(np.repeat(np.arange(Tp), len(j)))
        jj.append(np.tile(j, Tp))
        ns.append(np.tile(steps, Tp))
    ex, tt, jj, ns = (np.concatenate(a).astype(np.int64) for a in (ex, tt, jj, ns))
    order = np.argsort(-ns, kind="stable")
    ex, tt, jj, ns = ex[order], tt[order], jj[order], ns[order]
    s = np.arange(Smax)
    pos = jj[:, None] + s[None, :]
    targets = ypad[ex[:, None], pos]
    tokens = np.empty_like(targets)
    tokens[:, 0] = V
    tokens[:, 1:] = targets[:, :-1]
    active = [int(np.count_nonzero(ns > step)) for step in range(Smax)]
    while active and active[-1] == 0:
        active.pop()
    return _Rows(ex=ex, t=tt, j=jj, nsteps=ns, xrow=xoff[ex] + tt, crow=ex * (Tmax + 1) + jj,
                 tokens=tokens, targets=targets, active=active)


@dataclass
class _PassCache:
    rows: _Rows
    X: np.ndarray
    C: np.ndarray
    h0: np.ndarray
    steps: list  # per step: (gru cache, h_new, probs)
    con_cache: object
    con_shape: tuple


def _segment_pass(xs, ys, params, naive=False):
    cfg = params.cfg
    P = params.tensors
    E, V = cfg.E, cfg.V
    rows = _build_rows(xs, ys, cfg.L, naive=naive, V=V)
    con_states, con_cache = _connector_forward(ys, params)
    C = con_states.reshape(-1, cfg.Hc)
    X = np.concatenate(xs, axis=0).astype(params.dtype, copy=False)
    Xr = X[rows.xrow]
    h = np.tanh(Xr @ P["init_x"] + C[rows.crow] @ P["init_c"] + P["init_b"])
    h0 = h
    XW = Xr @ P["seg_W"][E:] + P["seg_b"]
    EW = P["emb"] @ P["seg_W"][:E]
    Smax = len(rows.active)
    tok_lp = np.zeros((rows.n, Smax), dtype=np.float64)
    end_lp = np.zeros((rows.n, Smax), dtype=np.float64)
    steps = []
    for s, n in enumerate(rows.active):
        gi = EW[rows.tokens[:n, s]] + XW[:n]
        h, gcache = gru_step(gi, h[:n], P["seg_U"])
        lsm = log_softmax(h @ P["out_W"] + P["out_b"])
        if not np.all(np.isfinite(lsm)):
            bad = int(np.argwhere(~np.isfinite(lsm).all(axis=1))[0, 0])
            raise NonFiniteError(
                f"non-finite activation at (t={rows.t[bad]}, j={rows.j[bad]}) "
                f"of example {rows.ex[bad]}, step {s}")
        tok_lp[:n, s] = lsm[np.arange(n), rows.targets[:n, s]]
        end_lp[:n, s] = lsm[:, V]
        steps.append((gcache, h, np.exp(lsm)))
    cache = _PassCache(rows, X, C, h0, steps, con_cache, con_states.shape)
    return tok_lp, end_lp, cache


def _segment_logp(tok_lp, end_lp, nsteps):
    """``logp[r, l] = sum(tok_lp[r, :l]) + end_lp[r, l]`` for ``l < nsteps[r]``."""
    n, S = tok_lp.shape
    prefix = np.zeros((n, S), dtype=np.float64)
    prefix[:, 1:] = np.cumsum(tok_lp[:, :-1], axis=1)
    out = prefix + end_lp
    out[np.arange(S)[None, :] >= nsteps[:, None]] = -np.inf
    return out


def _segment_pass_backward(cache: _PassCache, wrows, params, grads):
    """Backprop ``sum_r sum_l wrows[r, l] * logp[r, l]`` into ``grads``.

    Returns gradients w.r.t. the stacked features ``X``.
    """
    cfg = params.cfg
    P = params.tensors
    E, V = cfg.E, cfg.V
    rows = cache.rows
    dt = params.dtype
    # mass of segments that continue past step s (token emission) and that stop at s ($)
    tail = np.cumsum(wrows[:, ::-1], axis=1)[:, ::-1]
    tok_w = np.zeros_like(wrows)
    tok_w[:, :-1] = tail[:, 1:]
    dh = np.zeros((rows.n, cfg.H), dtype=dt)
    dXW = np.zeros((rows.n, 3 * cfg.H), dtype=dt)
    dEW = np.zeros((V + 1, 3 * cfg.H), dtype=dt)
    for s in range(len(rows.active) - 1, -1, -1):
        n = rows.active[s]
        gcache, h_s, probs = cache.steps[s]
        a = tok_w[:n, s]
        e = wrows[:n, s]
        dlogits = -(a + e)[:, None] * probs
        dlogits[np.arange(n), rows.targets[:n, s]] += a
        dlogits[:, V] += e
        dlogits = dlogits.astype(dt, copy=False)
        grads["out_W"] += h_s.T @ dlogits
        grads["out_b"] += dlogits.sum(axis=0)
        dh[:n] += dlogits @ P["out_W"].T
        dgi, dh[:n], dU = gru_step_backward(dh[:n], gcache, P["seg_U"])
        grads["seg_U"] += dU
        dXW[:n] += dgi
        np.add.at(dEW, rows.tokens[:n, s], dgi)
    dpre = dh * (1.0 - cache.h0 * cache.h0)
    Xr = cache.X[rows.xrow]
    Cr = cache.C[rows.crow]
    grads["init_x"] += Xr.T @ dpre
    grads["init_c"] += Cr.T @ dpre
    grads["init_b"] += dpre.sum(axis=0)
    grads["seg_b"] += dXW.sum(axis=0)
    grads["seg_W"][E:] += Xr.T @ dXW
    grads["seg_W"][:E] += P["emb"].T @ dEW
    grads["emb"] += dEW @ P["seg_W"][:E].T
    dXr = dpre @ P["init_x"].T + dXW @ P["seg_W"][E:].T
    dX = np.zeros_like(cache.X)
    np.add.at(dX, rows.xrow, dXr)
    dC = np.zeros_like(cache.C)
    np.add.at(dC, rows.crow, dpre @ P["init_c"].T)
    _connector_backward(dC.reshape(cache.con_shape), cache.con_cache, params, grads)
    return dX


# ---------------------------------------------------------- public surface

@dataclass
class SegmentLattice:
    """Log-probabilities ``logp[t, j, l]`` of every candidate segment.

    Entries with ``j + l > T`` are ``-inf``. ``cache`` holds the activations
    needed by :func:`accumulate_gradients`.
    """
    logp: np.ndarray
    T: int
    Tp: int
    L: int
    cache: object = field(default=None, repr=False)
    index: int = 0


@dataclass
class BatchLattice:
    lattices: list
    cache: _PassCache = field(repr=False)
    enc_cache: object = field(default=None, repr=False)


def _scatter_lattices(xs, ys, rows, logp_rows, L, naive=False):
    out = [np.full((len(x), len(y) + 1, L + 1), -np.inf) for x, y in zip(xs, ys)]
    if naive:
        ell = rows.nsteps - 1
        vals = logp_rows[np.arange(rows.n), ell]
        for k in range(len(xs)):
            m = rows.ex == k
            out[k][rows.t[m], rows.j[m], ell[m]] = vals[m]
    else:
        width = logp_rows.shape[1]
        for k in range(len(xs)):
            m = rows.ex == k
            out[k][rows.t[m], rows.j[m], :width] = logp_rows[m]
    return out


def _check_inputs(xs, ys, params, case=2):
    cfg = params.cfg
    for x, y in zip(xs, ys):
        if x.ndim != 2 or x.shape[1] != cfg.feature_dim or len(x) < 1:
            raise ValueError(f"input must have shape (T' >= 1, {cfg.feature_dim}), got {x.shape}")
        if any((v < 0 or v >= cfg.V) for v in y):
            raise ValueError(f"target ids must lie in [0, {cfg.V})")
        if case == 2 and not feasible(cfg, len(y), len(x)):
            raise InfeasibleError(f"target of length {len(y)} exceeds T'*L = {len(x) * cfg.L}")


def batch_lattice(xs, ys, params: SegmentScorerParams, raw=False) -> BatchLattice:
    """Lattices for several examples in one batched pass.

    With ``raw=True`` the inputs are passed through the configured encoder.
    """
    enc_cache = None
    if raw:
        xs, enc_cache = encode(xs, params)
    xs = [np.asarray(x, dtype=params.dtype) for x in xs]
    ys = [list(map(int, y)) for y in ys]
    _check_inputs(xs, ys, params)
    tok_lp, end_lp, cache = _segment_pass(xs, ys, params)
    logp_rows = _segment_logp(tok_lp, end_lp, cache.rows.nsteps)
    lats = _scatter_lattices(xs, ys, cache.rows, logp_rows, params.cfg.L)
    out = [SegmentLattice(lp, len(y), len(x), params.cfg.L, cache, k)
           for k, (lp, x, y) in enumerate(zip(lats, xs, ys))]
    return BatchLattice(out, cache, enc_cache)


def segment_lattice(x, y, params: SegmentScorerParams, cfg: ModelConfig | None = None) -> SegmentLattice:
    """Shared-pass lattice for one example (``x`` are the segment-model features)."""
    if cfg is not None and cfg != params.cfg:
        raise ValueError("cfg does not match params.cfg")
    return batch_lattice([x], [y], params).lattices[0]


def naive_segment_lattice(x, y, params: SegmentScorerParams) -> np.ndarray:
    """Same lattice, but one independent recurrent pass per segment."""
    x = np.asarray(x, dtype=params.dtype)
    y = list(map(int, y))
    _check_inputs([x], [y], params)
    tok_lp, end_lp, cache = _segment_pass([x], [y], params, naive=True)
    logp_rows = _segment_logp(tok_lp, end_lp, cache.rows.nsteps)
    return _scatter_lattices([x], [y], cache.rows, logp_rows, params.cfg.L, naive=True)[0]


def case1_lattice(x, y, params: SegmentScorerParams) -> np.ndarray:
    """Case I lattice ``logp1[j, l]`` for a single input vector ``x``.

    Column 0 (the empty segment) is set to ``-inf``.
    """
    x = np.asarray(x, dtype=params.dtype).reshape(1, -1)
    y = list(map(int, y))
    _check_inputs([x], [y], params, case=1)
    if not y:
        raise ValueError("Case I targets must be non-empty")
    tok_lp, end_lp, cache = _segment_pass([x], [y], params)
    logp_rows = _segment_logp(tok_lp, end_lp, cache.rows.nsteps)
    logp1 = _scatter_lattices([x], [y], cache.rows, logp_rows, params.cfg.L)[0][0]
    logp1[:, 0] = -np.inf
    return logp1


def _gather_weights(cache: _PassCache, weights):
    rows = cache.rows
    S = len(rows.active)
    wrows = np.zeros((rows.n, S), dtype=np.float64)
    for k, w in enumerate(weights):
        m = rows.ex == k
        wrows[m] = w[rows.t[m], rows.j[m], :S]
    wrows[np.arange(S)[None, :] >= rows.nsteps[:, None]] = 0.0
    return wrows


def batch_backward(blat: BatchLattice, weights, params: SegmentScorerParams, grads=None):
    """Gradients of ``sum_k sum w_k * logp_k`` for a batch.

    Returns ``(grads, dxs)`` where ``dxs`` are gradients w.r.t. each example's
    inputs (raw inputs when the batch was built with ``raw=True``).
    """
    if grads is None:
        grads = params.zeros_like()
    for lat, w in zip(blat.lattices, weights):
        if np.shape(w) != lat.logp.shape:
            raise ValueError(f"weights shape {np.shape(w)} != lattice shape {lat.logp.shape}")
    wrows = _gather_weights(blat.cache, weights)
    dX = _segment_pass_backward(blat.cache, wrows, params, grads)
    bounds = np.cumsum([0] + [lat.Tp for lat in blat.lattices])
    dxs = [dX[a:b] for a, b in zip(bounds[:-1], bounds[1:])]
    if blat.enc_cache is not None:
        dxs = encode_backward(dxs, blat.enc_cache, params, grads)
    return grads, dxs


def accumulate_gradients(lattice: SegmentLattice, w, x, y, params: SegmentScorerParams):
    """Gradients of ``sum_{t,j,l} w[t,j,l] * logp[t,j,l]``.

    With the posterior weights this is the gradient of ``log p(y|x)``. Returns
    ``(param_grads, dL/dx)``.
    """
    if lattice.cache is None or len(lattice.cache.rows.active) == 0:
        raise ValueError("lattice carries no activation cache")
    if np.shape(w) != lattice.logp.shape:
        raise ValueError(f"weights shape {np.shape(w)} != lattice shape {lattice.logp.shape}")
    if int(lattice.cache.rows.ex.max()) != 0:
        raise ValueError("use batch_backward for lattices built in a batch")
    grads = params.zeros_like()
    wrows = _gather_weights(lattice.cache, [np.asarray(w, dtype=np.float64)])
    dX = _segment_pass_backward(lattice.cache, wrows, params, grads)
    return grads, dX


def log_likelihood_and_grads(x, y, params: SegmentScorerParams):
    """``log p(y|x)`` and its gradients for one example (features ``x``)."""
    lat = segment_lattice(x, y, params)
    ll, _, w = marginals(lat.logp)
    grads, dx = accumulate_gradients(lat, w, x, y, params)
    return ll, grads, dx


def log_likelihood(x, y, params: SegmentScorerParams) -> float:
    x = np.asarray(x, dtype=params.dtype)
    if not feasible(params.cfg, len(y), len(x)):
        return -math.inf
    return float(forward(segment_lattice(x, y, params).logp)[-1, -1])
