"""Checkpoint blob + manifest round trips and integrity validation."""

import json

import numpy as np
import pytest

from tabdro.checkpoint import load_tensors, save_tensors
from tabdro.tensor import ParamSet, fingerprint


def _params(seed=0):
    rng = np.random.default_rng(seed)
    params = ParamSet()
    params.add("emb.a", rng.normal(size=(5, 3)))
    params.add("enc.w1", rng.normal(size=(3, 3)), trainable=False)
    params.add("head.a.b", rng.normal(size=2))
    return params


def test_round_trip_bit_exact(tmp_path):
    params = _params()
    save_tensors(params, tmp_path / "m.bin", tmp_path / "m.json", meta={"d": 3})
    loaded, meta = load_tensors(tmp_path / "m.bin", tmp_path / "m.json")
    assert meta == {"d": 3}
    assert loaded.names() == params.names()
    for name in params.names():
        assert np.array_equal(loaded[name].values, params[name].values)
        assert loaded[name].trainable == params[name].trainable
    assert fingerprint(loaded) == fingerprint(params)


def test_blob_is_little_endian_float64(tmp_path):
    params = ParamSet()
    params.add("x", np.array([1.0, 2.0, 3.0]))
    save_tensors(params, tmp_path / "m.bin", tmp_path / "m.json")
    raw = (tmp_path / "m.bin").read_bytes()
    assert raw == np.array([1.0, 2.0, 3.0]).astype("<f8").tobytes()


def test_corrupted_blob_detected(tmp_path):
    save_tensors(_params(), tmp_path / "m.bin", tmp_path / "m.json")
    blob = bytearray((tmp_path / "m.bin").read_bytes())
    blob[4] ^= 0xFF
    (tmp_path / "m.bin").write_bytes(bytes(blob))
    with pytest.raises(ValueError, match="hash"):
        load_tensors(tmp_path / "m.bin", tmp_path / "m.json")


def test_truncated_blob_detected(tmp_path):
    save_tensors(_params(), tmp_path / "m.bin", tmp_path / "m.json")
    manifest = json.loads((tmp_path / "m.json").read_text())
    manifest["tensors"][0]["shape"] = [50, 3]
    (tmp_path / "m.json").write_text(json.dumps(manifest))
    with pytest.raises(ValueError):
        load_tensors(tmp_path / "m.bin", tmp_path / "m.json")
