import json

import numpy as np
import pytest

from swan.core import InfeasibleError
from swan.model import SegmentScorerParams, load_checkpoint
from swan.tasks import Dataset, Example, SyntheticTaskSpec, generate_dataset
from swan.train import (Adam, TrainConfig, TrainingAborted, clip_global_norm, evaluate, levenshtein,
                        split_dev, train)

SMALL = dict(H=8, Hc=4, E=4, L=3, batch_size=8, beam=2)


@pytest.fixture
def small_ds():
    return generate_dataset(SyntheticTaskSpec(V=3, max_len=4, seed=3, rule_seed=1), 24)


def test_config_validation(tmp_path):
    with pytest.raises(ValueError):
        TrainConfig(lr=-1)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(optimizer="rmsprop")
    (tmp_path / "c.json").write_text(json.dumps({"lr": 0.01, "H": 5}))
    cfg = TrainConfig.from_file(tmp_path / "c.json", H=7, epochs=None)
    assert cfg.lr == 0.01 and cfg.H == 7 and cfg.epochs == 10
    (tmp_path / "bad.json").write_text(json.dumps({"layers": 2}))
    with pytest.raises(ValueError):
        TrainConfig.from_file(tmp_path / "bad.json")


def test_levenshtein():
    assert levenshtein("kitten", "sitting") == 3
    assert levenshtein([1, 2], [1, 2]) == 0
    assert levenshtein([], [1, 2]) == 2


def test_clip_global_norm():
    g = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert clip_global_norm(g, 1.0) == pytest.approx(5.0)
    assert np.sqrt(g["a"] ** 2 + g["b"] ** 2)[0] == pytest.approx(1.0)


def test_adam_first_step_is_lr_sized():
    from swan.core import ModelConfig
    p = SegmentScorerParams.init(ModelConfig(V=2, d=2), seed=0)
    before = p.copy()
    opt = Adam(p, lr=0.01)
    opt.step(p, {k: np.ones_like(v) for k, v in p.items()})
    for k in p:
        np.testing.assert_allclose(before[k] - p[k], 0.01, rtol=1e-6)


def test_lr_zero_leaves_params(small_ds):
    cfg = TrainConfig(lr=0.0, epochs=1, **SMALL)
    p0 = SegmentScorerParams.init(cfg.model_config(small_ds.out_vocab.size, small_ds.in_vocab.size), seed=0)
    p1, _ = train(cfg, small_ds, None, params=p0.copy())
    for k in p0:
        assert np.array_equal(p0[k], p1[k])


def test_one_example_nll_decreases():
    ds = generate_dataset(SyntheticTaskSpec(V=3, min_len=3, max_len=3, seed=0), 1)
    _, hist = train(TrainConfig(lr=1e-2, epochs=5, **SMALL), ds)
    nll = [h["nll"] for h in hist]
    assert all(b < a for a, b in zip(nll, nll[1:])), nll


def test_checkpoint_and_metrics_written(tmp_path, small_ds):
    tr, dev = split_dev(small_ds, 0.25, 0)
    ck, met = tmp_path / "m.npz", tmp_path / "m.tsv"
    cfg = TrainConfig(epochs=2, checkpoint=str(ck), metrics=str(met), **SMALL)
    params, hist = train(cfg, tr, dev)
    lines = met.read_text().splitlines()
    assert len(lines) == 2 and all(len(l.split("\t")) == 5 for l in lines)
    loaded, meta = load_checkpoint(ck)
    assert meta["epoch"] == 2 and meta["out_vocab"] == list(tr.out_vocab.tokens)
    r1, r2 = evaluate(params, dev, beam=2), evaluate(loaded, dev, beam=2)
    assert r1.as_dict() == r2.as_dict() and r1.hyps == r2.hyps


def test_training_deterministic(small_ds):
    cfg = TrainConfig(epochs=2, seed=4, **SMALL)
    _, h1 = train(cfg, small_ds, small_ds)
    _, h2 = train(cfg, small_ds, small_ds)
    assert h1 == h2


def test_infeasible_training_data(small_ds):
    bad = Dataset(small_ds.in_vocab, small_ds.out_vocab,
                  [Example(["A"], ["a", "a", "a", "a"])])
    with pytest.raises(InfeasibleError):
        train(TrainConfig(**SMALL), bad)


def test_nonfinite_loss_aborts(tmp_path, small_ds):
    cfg = TrainConfig(epochs=3, checkpoint=str(tmp_path / "m.npz"), **SMALL)
    p = SegmentScorerParams.init(cfg.model_config(small_ds.out_vocab.size, small_ds.in_vocab.size))
    calls = []

    def poison(epoch, line):
        calls.append(epoch)
        p["out_W"][0, 0] = np.nan
    with pytest.raises(TrainingAborted, match="epoch 2"):
        train(cfg, small_ds, None, params=p, on_epoch=poison)
    _, meta = load_checkpoint(tmp_path / "m.npz")
    assert meta["epoch"] == 1 and calls == [1]


def test_evaluate_perfect_reference(small_ds):
    # a model that knows nothing still scores reference-vs-reference edit distance 0
    assert levenshtein(small_ds.examples[0].outputs, small_ds.examples[0].outputs) == 0
    cfg = TrainConfig(**SMALL)
    p = SegmentScorerParams.init(cfg.model_config(small_ds.out_vocab.size, small_ds.in_vocab.size))
    rep = evaluate(p, small_ds, beam=2)
    assert rep.n == 24 and 0.0 <= rep.seq_acc <= 1.0 and rep.edit_rate >= 0.0
    assert rep.seg_recovery is not None


def test_evaluate_vocab_mismatch(small_ds):
    from swan.core import ModelConfig, SwanError
    p = SegmentScorerParams.init(ModelConfig(V=5, d=3))
    with pytest.raises(SwanError, match="vocabulary mismatch"):
        evaluate(p, small_ds)


def test_float32_training_runs(small_ds):
    params, hist = train(TrainConfig(epochs=1, dtype="float32", **SMALL), small_ds)
    assert params.dtype == np.float32 and np.isfinite(hist[0]["nll"])
