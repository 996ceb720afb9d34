import math

import numpy as np
import pytest

from swan.core import ModelConfig
from swan.decoder import BeamHypothesis, beam_search, greedy_decode, merge_duplicates
from swan.model import log_likelihood
from swan.oracle import exhaustive_decode
from swan.selftest import random_params

DEC = ModelConfig(V=2, d=2, H=4, Hc=3, L=2, E=3)


def _hyp(out, p):
    return BeamHypothesis(tuple(out), math.log(p), np.zeros(1))


def test_merge_examples():
    beam = [_hyp([0], 0.1), _hyp([1], 0.2)]
    assert [h.output for h in merge_duplicates(beam)] == [(0,), (1,)]
    merged = merge_duplicates([_hyp([0, 1], 0.1), _hyp([0, 1], 0.2), _hyp([1], 0.3)])
    assert len(merged) == 2
    assert math.exp(merged[0].score) == pytest.approx(0.3, abs=1e-15)


def test_deterministic_scorer_greedy():
    # every input emits exactly [1] then '$'
    p = random_params(DEC, 0).with_vector(np.zeros(random_params(DEC, 0).size))
    H = DEC.H
    p["emb"][1, 0] = 20.0          # reading token 1 ...
    p["seg_W"][0, 2 * H] = 1.0     # ... drives candidate unit 0 to tanh(20) ~ 1
    p["seg_W"][0, H] = -40.0       # and closes the update gate so h takes it
    p["out_b"][:] = [-50.0, 0.0, -50.0]  # h = 0 (after BOS): token 1
    p["out_W"][0] = [0.0, -100.0, 100.0]  # h[0] ~ 1: '$'
    out, score = greedy_decode(np.zeros((3, 2)), p)
    assert out == [1, 1, 1]
    assert score > math.log(0.99)


@pytest.mark.parametrize("seed", range(12))
def test_saturated_beam_matches_exhaustive(seed):
    rng = np.random.default_rng(100 + seed)
    p = random_params(DEC, 500 + seed, scale=1.5)
    x = rng.normal(size=(2, 2))
    assert beam_search(x, p, B=64)[0] == exhaustive_decode(x, p)[0]


@pytest.mark.parametrize("seed", range(8))
def test_best_score_monotone_in_beam(seed):
    rng = np.random.default_rng(seed)
    p = random_params(ModelConfig(V=3, d=2, H=4, Hc=3, L=2, E=3), seed, scale=1.2)
    x = rng.normal(size=(3, 2))
    scores = [beam_search(x, p, B=b)[1] for b in (1, 2, 4, 8, 16, 32)]
    assert all(b >= a - 1e-12 for a, b in zip(scores, scores[1:]))


def test_saturated_score_is_exact_marginal():
    rng = np.random.default_rng(7)
    p = random_params(DEC, 7, scale=1.5)
    x = rng.normal(size=(2, 2))
    out, score = beam_search(x, p, B=64)
    assert score == pytest.approx(log_likelihood(x, out, p), abs=1e-10)


def test_merging_sums_segmentations():
    rng = np.random.default_rng(3)
    p = random_params(DEC, 3, scale=1.5)
    x = rng.normal(size=(2, 2))
    out, merged = beam_search(x, p, B=64, merge=True)
    _, unmerged = beam_search(x, p, B=64, merge=False)
    assert merged >= unmerged - 1e-12


def test_rerank_variant_and_length_norm():
    rng = np.random.default_rng(9)
    p = random_params(DEC, 9, scale=1.5)
    x = rng.normal(size=(2, 2))
    out, _ = beam_search(x, p, B=64, inner="rerank")
    assert out == exhaustive_decode(x, p)[0]
    out_n, score_n = beam_search(x, p, B=4, length_norm=True)
    assert isinstance(out_n, list) and math.isfinite(score_n)


def test_bad_arguments(tiny_params):
    with pytest.raises(ValueError):
        beam_search(np.zeros((1, 2)), tiny_params, B=0)
    with pytest.raises(ValueError):
        beam_search(np.zeros((1, 2)), tiny_params, inner="other")
