"""Encoded datasets: splits, round trips, and the synthetic generator."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_dataset, small_schema
from tabdro.dataset import encode, stratified_split, synth_spurious
from tabdro.errors import ConfigError, DataError
from tabdro.schema import read_csv, write_csv


def test_round_trip_decode_encode(tmp_path):
    ds = synth_spurious(n=300, k=4, bias=0.9, minority_frac=0.2, seed=7)
    table = ds.to_table()
    write_csv(table, tmp_path / "d.csv")
    back = encode(read_csv(tmp_path / "d.csv"), ds.schema)
    np.testing.assert_array_equal(back.cat, ds.cat)
    np.testing.assert_array_equal(back.labels, ds.labels)


def test_round_trip_vocabulary_strings():
    ds = synth_spurious(n=120, k=2, bias=0.8, minority_frac=0.1, seed=1)
    table = ds.to_table()
    for i in range(ds.n):
        for j, f in enumerate(ds.schema.categorical):
            assert table.rows[i][j] == f.vocabulary[ds.cat[i, j]]


def test_split_sizes_ten_rows():
    schema = small_schema(cards=(2,), n_cont=0)
    ds = random_dataset(schema, 10, seed=0)
    ds.labels[:] = [0, 1] * 5
    bundle = stratified_split(ds, (0.6, 0.2, 0.2), seed=43)
    assert (bundle.train.n, bundle.val.n, bundle.test.n) == (6, 2, 2)
    assert (bundle.train.labels == 1).sum() >= 2


def test_split_determinism():
    ds = random_dataset(small_schema(), 50, seed=2)
    a = stratified_split(ds, (0.7, 0.15, 0.15), seed=43)
    b = stratified_split(ds, (0.7, 0.15, 0.15), seed=43)
    for x, y in ((a.train, b.train), (a.val, b.val), (a.test, b.test)):
        np.testing.assert_array_equal(x.row_ids, y.row_ids)
    c = stratified_split(ds, (0.7, 0.15, 0.15), seed=44)
    assert not np.array_equal(a.train.row_ids, c.train.row_ids)


def test_split_ratio_validation():
    ds = random_dataset(small_schema(), 30, seed=3)
    with pytest.raises(ConfigError, match="sum"):
        stratified_split(ds, (0.5, 0.5, 0.1), seed=43)
    with pytest.raises(ConfigError):
        stratified_split(ds, (0.9, 0.2, -0.1), seed=43)


def test_split_needs_three_rows_per_class():
    schema = small_schema(cards=(2,), n_cont=0)
    ds = random_dataset(schema, 10, seed=4)
    ds.labels[:] = 0
    ds.labels[0] = 1
    with pytest.raises(DataError, match="class 1"):
        stratified_split(ds, (0.6, 0.2, 0.2), seed=43)


@settings(max_examples=30, deadline=None)
@given(
    n=st.integers(20, 200),
    seed=st.integers(0, 10_000),
    pos_frac=st.floats(0.15, 0.85),
)
def test_split_partition_and_stratification_properties(n, seed, pos_frac):
    schema = small_schema(cards=(3,), n_cont=0)
    ds = random_dataset(schema, n, seed=seed)
    n_pos = min(max(int(round(n * pos_frac)), 3), n - 3)
    labels = np.zeros(n, dtype=np.int64)
    labels[:n_pos] = 1
    ds.labels[:] = np.random.default_rng(seed).permutation(labels)

    bundle = stratified_split(ds, (0.7, 0.15, 0.15), seed=seed)
    ids = [set(s.row_ids.tolist()) for s in (bundle.train, bundle.val, bundle.test)]
    # disjoint and covering
    assert ids[0] | ids[1] | ids[2] == set(ds.row_ids.tolist())
    assert not (ids[0] & ids[1]) and not (ids[0] & ids[2]) and not (ids[1] & ids[2])
    # per-split class fraction within 1/|split| of the overall fraction
    overall = ds.labels.mean()
    for split in (bundle.train, bundle.val, bundle.test):
        assert abs(split.labels.mean() - overall) <= 1.0 / split.n + 1e-12


def test_synth_majority_agreement_band():
    ds = synth_spurious(n=2000, k=3, bias=0.95, minority_frac=0.1, seed=43)
    minority = ds.cat[:, 1] == 0
    majority_agree = (ds.cat[~minority, 0] == ds.labels[~minority]).mean()
    assert 0.93 <= majority_agree <= 0.97
    minority_agree = (ds.cat[minority, 0] == ds.labels[minority]).mean()
    assert 0.4 <= minority_agree <= 0.6
    assert int(minority.sum()) == 200  # exactly round(n * minority_frac)


def test_synth_unbiased_coin_case():
    ds = synth_spurious(n=5000, k=2, bias=0.5, minority_frac=0.1, seed=43)
    agree = (ds.cat[:, 0] == ds.labels).mean()
    assert abs(agree - 0.5) <= 0.03


def test_synth_seed_determinism_byte_identical():
    a = synth_spurious(n=500, k=4, bias=0.9, minority_frac=0.15, seed=43)
    b = synth_spurious(n=500, k=4, bias=0.9, minority_frac=0.15, seed=43)
    assert a.cat.tobytes() == b.cat.tobytes()
    assert a.labels.tobytes() == b.labels.tobytes()
    c = synth_spurious(n=500, k=4, bias=0.9, minority_frac=0.15, seed=44)
    assert a.cat.tobytes() != c.cat.tobytes()


def test_synth_validation():
    with pytest.raises(ConfigError):
        synth_spurious(n=50, k=4, bias=0.9, minority_frac=0.1, seed=1)
    with pytest.raises(ConfigError):
        synth_spurious(n=200, k=1, bias=0.9, minority_frac=0.1, seed=1)
    with pytest.raises(ConfigError):
        synth_spurious(n=200, k=3, bias=1.2, minority_frac=0.1, seed=1)
    with pytest.raises(ConfigError):
        synth_spurious(n=200, k=3, bias=0.9, minority_frac=1.5, seed=1)


def test_take_preserves_row_ids():
    ds = synth_spurious(n=200, k=2, bias=0.8, minority_frac=0.2, seed=5)
    sub = ds.take(np.array([5, 17, 99]))
    np.testing.assert_array_equal(sub.row_ids, [5, 17, 99])
    np.testing.assert_array_equal(sub.cat, ds.cat[[5, 17, 99]])
