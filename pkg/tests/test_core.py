import pytest
from hypothesis import given, strategies as st

from swan.core import (ModelConfig, Segmentation, Vocab, decode_tokens, encode_tokens, feasible,
                       format_segmentation, validate_segmentation)


def test_feasible_examples():
    assert feasible(ModelConfig(V=2, d=1, L=3), T=3, Tp=2)
    assert not feasible(ModelConfig(V=2, d=1, L=2), T=5, Tp=2)
    assert feasible(ModelConfig(V=2, d=1, L=1), T=4, Tp=4)
    assert not feasible(ModelConfig(V=2, d=1), T=0, case=1)


def test_encode_tokens():
    v = Vocab(("a", "b"))
    assert encode_tokens(["a", "b"], v) == [0, 1]
    assert encode_tokens([], v) == []
    with pytest.raises(KeyError, match="unknown token z"):
        encode_tokens(["z"], v)


@given(st.lists(st.sampled_from("abc"), max_size=12))
def test_encode_decode_roundtrip(s):
    v = Vocab(("a", "b", "c"))
    assert decode_tokens(encode_tokens(s, v), v) == s


@pytest.mark.parametrize("tokens", [(), ("a", "a"), ("$",), ("a b",), ("",)])
def test_vocab_rejects(tokens):
    with pytest.raises(ValueError):
        Vocab(tokens)


def test_vocab_file_roundtrip(tmp_path):
    v = Vocab(("x", "y", "zz"))
    v.save(tmp_path / "v.txt")
    assert Vocab.load(tmp_path / "v.txt") == v
    assert v.end_id == 3


def test_decode_out_of_range():
    with pytest.raises(ValueError):
        decode_tokens([2], Vocab(("a", "b")))


def test_segmentation_helpers():
    y = [0, 1, 1, 0]
    seg = Segmentation.from_lengths(y, [2, 0, 2])
    assert seg.lengths == (2, 0, 2)
    assert seg.concat() == y
    validate_segmentation(seg, y, L=2, Tp=3)
    with pytest.raises(ValueError):
        validate_segmentation(seg, y, L=1)
    with pytest.raises(ValueError):
        validate_segmentation(seg, y, L=2, allow_empty=False)
    with pytest.raises(ValueError):
        validate_segmentation(seg, y, L=2, Tp=2)
    with pytest.raises(ValueError):
        Segmentation.from_lengths(y, [1, 1])
    assert format_segmentation(seg, Vocab(("a", "b"))) == "[a b] [] [b a]"


def test_model_config_json_roundtrip():
    import json
    cfg = ModelConfig(V=3, d=4, encoder=5, tie_embeddings=False)
    assert ModelConfig.from_dict(json.loads(cfg.to_json())) == cfg
    assert cfg.feature_dim == 5
    with pytest.raises(ValueError):
        ModelConfig.from_dict({"V": 2, "d": 2, "depth": 3})
    with pytest.raises(ValueError):
        ModelConfig(V=0, d=1)
