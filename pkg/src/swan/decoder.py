"""Beam search over SWAN outputs.

For every input element a left-to-right search extends each surviving
prefix by one symbol at a time. A candidate that emits ``$`` leaves the
inner search and shrinks the local budget; at the length cap ``$`` is
forced. After each input element, hypotheses with identical outputs are
merged by adding their probabilities, which is valid because later segments
depend only on the concatenated output.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SegmentScorerParams, gru_step, log_softmax


@dataclass
class BeamHypothesis:
    output: tuple
    score: float
    state: np.ndarray  # connector state after reading ``output``


def merge_duplicates(beam: list[BeamHypothesis]) -> list[BeamHypothesis]:
    """Collapse hypotheses with equal outputs; scores combine by log-add-exp.

    The connector state of the first member is kept (it only depends on the
    output, so every member carries the same one).
    """
    merged: dict[tuple, BeamHypothesis] = {}
    for hyp in beam:
        prev = merged.get(hyp.output)
        if prev is None:
            merged[hyp.output] = BeamHypothesis(hyp.output, hyp.score, hyp.state)
        else:
            prev.score = float(np.logaddexp(prev.score, hyp.score))
    return list(merged.values())


def _top(scores, keys, k):
    """Indices of the ``k`` largest scores; ties resolved by ``keys`` ascending."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], keys[i]))
    return order[:k]


class _Stepper:
    def __init__(self, params: SegmentScorerParams):
        P, cfg = params.tensors, params.cfg
        self.P, self.cfg = P, cfg
        self.EW = P["emb"] @ P["seg_W"][:cfg.E]
        self.con_table = P["emb"] if cfg.tie_embeddings else P["con_emb"]

    def begin(self, x_t, states):
        P = self.P
        xw = x_t @ P["seg_W"][self.cfg.E:] + P["seg_b"]
        h0 = np.tanh(x_t @ P["init_x"] + states @ P["init_c"] + P["init_b"])
        return self.step(h0, np.full(len(states), self.cfg.V), xw), xw

    def step(self, h, tokens, xw):
        h, _ = gru_step(self.EW[tokens] + xw, h, self.P["seg_U"])
        return h

    def logprobs(self, h):
        return log_softmax(h @ self.P["out_W"] + self.P["out_b"])

    def connector(self, state, tokens):
        P = self.P
        c = state[None, :]
        for tok in tokens:
            c, _ = gru_step(self.con_table[tok][None, :] @ P["con_W"] + P["con_b"], c, P["con_U"])
        return c[0]


def beam_search(x, params: SegmentScorerParams, B: int = 4, *, merge: bool = True,
                inner: str = "literal", length_norm: bool = False):
    """Decode features ``x`` (shape (T', F)); returns ``(output ids, log-prob)``.

    ``inner="literal"`` removes finished candidates from the inner search and
    decrements the budget for each; ``inner="rerank"`` keeps the budget fixed
    and ranks finished and unfinished candidates together, truncating the
    finished set to ``B`` afterwards. ``length_norm`` ranks final hypotheses
    by log-prob per output token.
    """
    if B < 1:
        raise ValueError("beam size must be >= 1")
    if inner not in ("literal", "rerank"):
        raise ValueError(f"unknown inner search mode {inner!r}")
    cfg = params.cfg
    L, V = cfg.L, cfg.V
    stepper = _Stepper(params)
    x = np.asarray(x, dtype=params.dtype)
    beam = [BeamHypothesis((), 0.0, np.zeros(cfg.Hc, dtype=params.dtype))]
    for t in range(len(x)):
        x_t = x[t][None, :]
        b = B
        finished = []  # (output, score, parent hypothesis, segment tokens)
        parents = list(range(len(beam)))
        segs = [()] * len(beam)
        scores = [hyp.score for hyp in beam]
        h, xw = stepper.begin(x_t, np.stack([hyp.state for hyp in beam]))
        for j in range(L + 1):
            lp = stepper.logprobs(h)
            if j == L:
                end = [scores[i] + float(lp[i, V]) for i in range(len(scores))]
                keys = [beam[parents[i]].output + segs[i] for i in range(len(scores))]
                for i in _top(end, keys, b):
                    finished.append((keys[i], end[i], parents[i], segs[i]))
                break
            cand_scores, cand_keys, cand = [], [], []
            for i in range(len(scores)):
                prefix = beam[parents[i]].output + segs[i]
                for sym in range(V + 1):
                    cand_scores.append(scores[i] + float(lp[i, sym]))
                    cand_keys.append(prefix + (sym,))
                    cand.append((i, sym))
            chosen = _top(cand_scores, cand_keys, b)
            next_rows, next_toks, next_parents, next_segs, next_scores = [], [], [], [], []
            for c in chosen:
                i, sym = cand[c]
                if sym == V:
                    out = beam[parents[i]].output + segs[i]
                    finished.append((out, cand_scores[c], parents[i], segs[i]))
                    if inner == "literal":
                        b -= 1
                else:
                    next_rows.append(i)
                    next_toks.append(sym)
                    next_parents.append(parents[i])
                    next_segs.append(segs[i] + (sym,))
                    next_scores.append(cand_scores[c])
            if b == 0 or not next_rows:
                break
            h = stepper.step(h[next_rows], np.array(next_toks), xw)
            parents, segs, scores = next_parents, next_segs, next_scores
        if inner == "rerank":
            keep = _top([f[1] for f in finished], [f[0] for f in finished], B)
            finished = [finished[i] for i in keep]
        states = {}
        for out, _, parent, seg in finished:
            if out not in states:
                states[out] = stepper.connector(beam[parent].state, seg)
        new_beam = [BeamHypothesis(out, score, states[out]) for out, score, _, _ in finished]
        if merge:
            new_beam = merge_duplicates(new_beam)
        beam = new_beam
    return _best(beam, length_norm)


def _best(beam, length_norm):
    def rank(h):
        return h.score / max(1, len(h.output)) if length_norm else h.score

    best = min(beam, key=lambda h: (-rank(h), h.output))
    return list(best.output), best.score


def greedy_decode(x, params: SegmentScorerParams):
    return beam_search(x, params, B=1)
