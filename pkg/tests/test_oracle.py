import math

import numpy as np
import pytest

from swan.core import ModelConfig
from swan.model import log_likelihood
from swan.oracle import (EnumerationCapError, EnumerationSpec, all_outputs, brute_force_likelihood,
                         count_segmentations, enumerate_segmentations, finite_diff_gradient,
                         segmentation_logprob, total_mass)
from swan.selftest import random_params


def test_enumeration_examples():
    assert enumerate_segmentations(EnumerationSpec(3, 2, 3)) == [(0, 3), (1, 2), (2, 1), (3, 0)]
    assert enumerate_segmentations(EnumerationSpec(0, 3, 2)) == [(0, 0, 0)]
    assert len(enumerate_segmentations(EnumerationSpec(4, 1, 2, allow_empty=False))) == 5


def test_count_examples():
    assert count_segmentations(EnumerationSpec(2, 2, 2)) == 3
    assert count_segmentations(EnumerationSpec(5, 2, 2)) == 0
    assert count_segmentations(EnumerationSpec(3, 1, 3, allow_empty=False)) == 4
    assert count_segmentations(EnumerationSpec(0, 1, 3, allow_empty=False)) == 0


@pytest.mark.parametrize("T,Tp,L,empty", [(t, tp, l, e) for t in range(7) for tp in range(1, 4)
                                          for l in range(1, 4) for e in (True, False)])
def test_count_matches_enumeration(T, Tp, L, empty):
    spec = EnumerationSpec(T, Tp, L, empty)
    segs = enumerate_segmentations(spec)
    assert len(segs) == count_segmentations(spec)
    assert len(set(segs)) == len(segs)
    for s in segs:
        assert sum(s) == T and all((0 if empty else 1) <= l <= L for l in s)


def test_enumeration_cap():
    with pytest.raises(EnumerationCapError):
        enumerate_segmentations(EnumerationSpec(12, 12, 3, cap=100))


def test_enumeration_with_target():
    segs = enumerate_segmentations(EnumerationSpec(2, 2, 2), y=[7, 8])
    assert [s.segments for s in segs] == [((), (7, 8)), ((7,), (8,)), ((7, 8), ())]


def test_uniform_closed_form(uniform22):
    assert math.exp(brute_force_likelihood(np.zeros((2, 2)), [0, 1], uniform22)) == \
        pytest.approx(1 / 27, abs=1e-12)


def test_single_segmentation_is_product(tiny_params, rng):
    x = rng.normal(size=(2, 2))
    y = [1, 0, 0, 1]  # T = T' * L forces (2, 2)
    assert brute_force_likelihood(x, y, tiny_params) == \
        pytest.approx(segmentation_logprob(x, y, [2, 2], tiny_params), abs=1e-14)


def test_case1_brute_force(rng):
    p = random_params(ModelConfig(V=2, d=2, L=2), 3)
    x = rng.normal(size=2)
    y = [0, 1, 1]
    terms = [segmentation_logprob(x[None, :], y, c, p, case=1) for c in [(1, 1, 1), (1, 2), (2, 1)]]
    assert brute_force_likelihood(x, y, p, case=1) == pytest.approx(np.logaddexp.reduce(terms), abs=1e-12)


def test_all_outputs_and_mass(uniform22):
    outs = list(all_outputs(2, 4))
    assert len(outs) == 31 and outs[0] == ()
    assert total_mass(np.zeros((2, 2)), uniform22) == pytest.approx(361 / 729, abs=1e-10)


def test_total_mass_is_deficient(tiny_params, rng):
    m = total_mass(rng.normal(size=(2, 2)), tiny_params)
    assert 0.0 < m < 1.0


def test_finite_diff_examples(rng):
    theta = rng.normal(size=5)
    np.testing.assert_allclose(finite_diff_gradient(lambda v: float(np.sum(v * v)), theta), 2 * theta,
                               atol=1e-9)
    assert np.all(finite_diff_gradient(lambda v: 3.0, theta) == 0.0)
    with pytest.raises(ValueError):
        finite_diff_gradient(lambda v: 0.0, theta, step=0)


def test_brute_force_matches_dp(rng):
    for i in range(10):
        cfg = ModelConfig(V=3, d=2, H=3, Hc=2, L=2, E=2)
        p = random_params(cfg, i)
        x = rng.normal(size=(3, 2))
        y = [int(v) for v in rng.integers(0, 3, size=int(rng.integers(0, 7)))]
        assert abs(brute_force_likelihood(x, y, p) - log_likelihood(x, y, p)) <= 1e-10
