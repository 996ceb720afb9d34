import math

import numpy as np
import pytest

from swan import marginal
from swan.core import InfeasibleError, ModelConfig, SwanError
from swan.model import (NonFiniteError, SegmentScorerParams, accumulate_gradients, batch_backward,
                        batch_lattice, connector_states, load_checkpoint, log_likelihood,
                        log_likelihood_and_grads, log_softmax, naive_segment_lattice,
                        param_shapes, save_checkpoint, segment_lattice)
from swan.oracle import _SegmentScorer, param_finite_diff
from swan.selftest import gradient_check, random_params

TINY = ModelConfig(V=2, d=2, H=3, Hc=2, L=2, E=2)


def test_connector_empty_target(tiny_params):
    c = connector_states([], tiny_params)
    assert c.shape == (1, 2)
    assert np.all(c == 0.0)


def test_connector_constant_dynamics():
    p = SegmentScorerParams.zeros(TINY)
    c = connector_states([0, 1, 1], p)
    # zero weights: each step maps h -> (1 - z) * n + z * h with z = 1/2, n = 0
    assert np.all(c == c[0])


def test_connector_prefix_property(tiny_params):
    y = [1, 0, 1]
    full = connector_states(y, tiny_params)
    assert np.array_equal(full[2], connector_states(y[:2], tiny_params)[2])


def test_uniform_lattice_closed_form(uniform22, rng):
    x = rng.normal(size=(3, 2))
    lat = segment_lattice(x, [0, 1, 1], uniform22)
    for j in range(4):
        for l in range(min(2, 3 - j) + 1):
            np.testing.assert_allclose(lat.logp[:, j, l], -(l + 1) * math.log(3), atol=1e-14)
    assert lat.logp[0, 3, 1] == -np.inf


def test_lattice_probabilities_in_unit_interval(tiny_params, rng):
    lat = segment_lattice(rng.normal(size=(2, 2)), [0, 1], tiny_params)
    assert lat.logp.shape == (2, 3, 3)
    fin = np.isfinite(lat.logp)
    assert np.all((lat.logp[fin] < 0))
    assert fin.sum() == 2 * (3 + 2 + 1)


def test_lattice_matches_per_segment_oracle(tiny_params, rng):
    x = rng.normal(size=(3, 2))
    y = [1, 1, 0, 1]
    lat = segment_lattice(x, y, tiny_params)
    scorer = _SegmentScorer(tiny_params)
    for t in range(3):
        for j in range(5):
            for l in range(min(2, 4 - j) + 1):
                ref = scorer.segment(x[t], y[:j], y[j:j + l])
                assert lat.logp[t, j, l] == pytest.approx(ref, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_shared_equals_naive(seed):
    rng = np.random.default_rng(seed)
    cfg = ModelConfig(V=3, d=3, H=5, Hc=4, L=3, E=3)
    p = random_params(cfg, seed)
    Tp = int(rng.integers(1, 5))
    y = [int(v) for v in rng.integers(0, 3, size=int(rng.integers(0, Tp * 3 + 1)))]
    x = rng.normal(size=(Tp, 3))
    shared, naive = segment_lattice(x, y, p).logp, naive_segment_lattice(x, y, p)
    fin = np.isfinite(shared)
    assert np.array_equal(fin, np.isfinite(naive))
    assert np.max(np.abs(shared[fin] - naive[fin]), initial=0.0) <= 1e-12


def test_batch_matches_single(tiny_params, rng):
    xs = [rng.normal(size=(n, 2)) for n in (1, 3, 2)]
    ys = [[1], [0, 1, 1, 0], []]
    blat = batch_lattice(xs, ys, tiny_params)
    for x, y, lat in zip(xs, ys, blat.lattices):
        np.testing.assert_allclose(lat.logp, segment_lattice(x, y, tiny_params).logp, atol=1e-14)


def test_infeasible_and_bad_tokens(tiny_params):
    x = np.zeros((1, 2))
    with pytest.raises(InfeasibleError):
        segment_lattice(x, [0, 0, 0], tiny_params)
    assert log_likelihood(x, [0, 0, 0], tiny_params) == -math.inf
    with pytest.raises((SwanError, ValueError)):
        segment_lattice(x, [5], tiny_params)


def test_zero_weights_zero_gradients(tiny_params, rng):
    x, y = rng.normal(size=(2, 2)), [0, 1]
    lat = segment_lattice(x, y, tiny_params)
    grads, dx = accumulate_gradients(lat, np.zeros_like(lat.logp), x, y, tiny_params)
    assert all(np.all(g == 0) for g in grads.values())
    assert np.all(dx == 0)


def test_single_weight_is_plain_backprop(tiny_params, rng):
    x, y = rng.normal(size=(2, 2)), [0, 1, 1]
    t, j, l = 1, 1, 2
    lat = segment_lattice(x, y, tiny_params)
    w = np.zeros_like(lat.logp)
    w[t, j, l] = 1.0
    grads, _ = accumulate_gradients(lat, w, x, y, tiny_params)
    num = param_finite_diff(lambda p: segment_lattice(x, y, p).logp[t, j, l], tiny_params)
    for k in grads:
        np.testing.assert_allclose(grads[k], num[k], atol=1e-8)


@pytest.mark.parametrize("variant", ["plain", "untied", "encoder"])
def test_gradients_match_finite_differences(variant, rng):
    cfg = ModelConfig(V=2, d=2, H=3, Hc=2, L=2, E=2, tie_embeddings=variant != "untied",
                      encoder=3 if variant == "encoder" else 0)
    p = random_params(cfg, 17)
    errs = gradient_check(rng.normal(size=(2, 2)), [1, 0], p, raw=variant == "encoder")
    assert set(errs) == set(param_shapes(cfg)) | {"x"}
    assert max(errs.values()) <= 1e-4, errs


def test_log_likelihood_and_grads_consistent(tiny_params, rng):
    x, y = rng.normal(size=(2, 2)), [1, 1]
    ll, grads, dx = log_likelihood_and_grads(x, y, tiny_params)
    assert ll == pytest.approx(log_likelihood(x, y, tiny_params), abs=1e-14)
    blat = batch_lattice([x], [y], tiny_params)
    _, _, w = marginal.marginals(blat.lattices[0].logp)
    g2, dxs = batch_backward(blat, [w], tiny_params)
    for k in grads:
        np.testing.assert_allclose(grads[k], g2[k], atol=1e-14)
    np.testing.assert_allclose(dx, dxs[0], atol=1e-14)


def test_log_softmax_normalized(rng):
    lp = log_softmax(rng.normal(size=(4, 5)) * 30)
    np.testing.assert_allclose(np.exp(lp).sum(axis=1), 1.0, atol=1e-14)


def test_checkpoint_roundtrip(tmp_path, tiny_params):
    path = tmp_path / "m.npz"
    save_checkpoint(path, tiny_params, {"epoch": 3})
    p2, meta = load_checkpoint(path)
    assert meta == {"epoch": 3}
    assert p2.cfg == tiny_params.cfg
    for k, v in tiny_params.items():
        assert np.array_equal(v, p2[k]) and v.dtype == p2[k].dtype
    assert not (tmp_path / "m.npz.tmp").exists()


def test_checkpoint_rejects_foreign_file(tmp_path):
    path = tmp_path / "x.npz"
    np.savez(path, a=np.zeros(2))
    with pytest.raises(SwanError):
        load_checkpoint(path)


def test_check_names_bad_tensor(tiny_params):
    p = tiny_params.copy()
    p["con_W"][0, 0] = np.inf
    with pytest.raises(NonFiniteError, match="con_W"):
        p.check()


def test_nonfinite_input_detected(tiny_params):
    x = np.array([[np.nan, 0.0], [0.0, 0.0]])
    with pytest.raises(NonFiniteError):
        segment_lattice(x, [0], tiny_params)


def test_float32_lattice_close(tiny_params, rng):
    x, y = rng.normal(size=(2, 2)), [0, 1]
    ll64 = log_likelihood(x, y, tiny_params)
    ll32 = log_likelihood(x, y, tiny_params.astype(np.float32))
    assert ll32 == pytest.approx(ll64, abs=1e-5)


def test_vector_roundtrip(tiny_params):
    v = tiny_params.vector()
    assert v.size == tiny_params.size
    assert np.array_equal(tiny_params.with_vector(v).vector(), v)
