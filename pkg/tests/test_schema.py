"""Schema inference, encoding, and persistence."""

import numpy as np
import pytest

from tabdro.dataset import encode
from tabdro.errors import DataError
from tabdro.schema import (
    CATEGORICAL,
    CONTINUOUS,
    RawTable,
    Schema,
    infer_schema,
    read_csv,
    write_csv,
)


def _table(columns, rows):
    return RawTable(columns=columns, rows=[list(r) for r in rows])


def test_first_appearance_vocabulary():
    t = _table(["f", "y"], [["a", "0"], ["b", "1"], ["a", "0"]])
    schema = infer_schema(t, "y")
    f = schema.features[0]
    assert f.kind == CATEGORICAL
    assert f.vocabulary == ["a", "b"]
    assert f.cardinality == 2


def test_ten_string_columns_stay_categorical():
    rng = np.random.default_rng(0)
    cols = [f"c{i}" for i in range(10)]
    rows = [[f"v{rng.integers(0, 4)}" for _ in cols] + [str(rng.integers(0, 2))]
            for _ in range(50)]
    schema = infer_schema(_table(cols + ["y"], rows), "y")
    assert schema.n_categorical == 10
    assert schema.n_continuous == 0


def test_many_distinct_numeric_values_become_continuous():
    rows = [[repr(float(i) / 7.0), "a" if i % 3 else "b", str(i % 2)]
            for i in range(1000)]
    schema = infer_schema(_table(["x", "g", "y"], rows), "y", max_card=64)
    x = next(f for f in schema.features if f.name == "x")
    assert x.kind == CONTINUOUS


def test_low_cardinality_numeric_is_categorical():
    rows = [[str(i % 3), "a" if i % 2 else "b", str(i % 2)] for i in range(30)]
    schema = infer_schema(_table(["x", "g", "y"], rows), "y")
    x = next(f for f in schema.features if f.name == "x")
    assert x.kind == CATEGORICAL


def test_overrides_force_kind():
    rows = [[str(i % 5), "a" if i % 2 else "b", str(i % 2)] for i in range(40)]
    schema = infer_schema(_table(["x", "g", "y"], rows), "y",
                          overrides={"x": CONTINUOUS})
    x = next(f for f in schema.features if f.name == "x")
    assert x.kind == CONTINUOUS
    with pytest.raises(DataError):
        infer_schema(_table(["x", "g", "y"], [["a", "p", "0"], ["b", "q", "1"]]), "y",
                     overrides={"x": CONTINUOUS})


def test_infer_errors():
    with pytest.raises(DataError, match="target"):
        infer_schema(_table(["a"], [["x"]]), "y")
    with pytest.raises(DataError, match="empty"):
        infer_schema(_table(["a", "y"], []), "y")
    with pytest.raises(DataError, match="constant"):
        infer_schema(_table(["a", "y"], [["k", "0"], ["k", "1"]]), "y")
    with pytest.raises(DataError, match="two distinct"):
        infer_schema(_table(["a", "y"], [["p", "0"], ["q", "0"]]), "y")
    with pytest.raises(DataError, match="two distinct"):
        infer_schema(_table(["a", "y"], [["p", "0"], ["q", "1"], ["r", "2"]]), "y")


def test_minority_target_value_is_positive():
    rows = [["a", "no"]] * 6 + [["b", "yes"]] * 3 + [["a", "yes"]]
    schema = infer_schema(_table(["f", "y"], rows), "y")
    assert schema.target_values == ["no", "yes"]
    schema2 = infer_schema(_table(["f", "y"], rows), "y", positive_label="no")
    assert schema2.target_values == ["yes", "no"]


def test_encode_maps_indices_and_labels():
    t = _table(["f", "y"], [["a", "no"], ["b", "yes"], ["a", "no"]])
    schema = infer_schema(t, "y")
    ds = encode(t, schema)
    np.testing.assert_array_equal(ds.cat[:, 0], [0, 1, 0])
    np.testing.assert_array_equal(ds.labels, [0, 1, 0])
    np.testing.assert_array_equal(ds.row_ids, [0, 1, 2])


def test_encode_zscore_identity():
    rows = [["2", "a", "0"], ["4", "b", "1"], ["6", "a", "0"]]
    schema = infer_schema(_table(["x", "g", "y"], rows), "y",
                          overrides={"x": CONTINUOUS})
    x = next(f for f in schema.features if f.name == "x")
    assert abs(x.mean - 4.0) < 1e-12
    ds = encode(_table(["x", "g", "y"], rows), schema)
    col = ds.cont[:, 0]
    np.testing.assert_allclose(col, (np.array([2.0, 4.0, 6.0]) - 4.0) / x.std, atol=1e-12)
    assert abs(col.mean()) < 1e-9
    assert abs(col.std() - 1.0) < 1e-9


def test_encode_unseen_category_policy():
    t = _table(["f", "y"], [["a", "no"], ["b", "yes"]])
    schema = infer_schema(t, "y")
    novel = _table(["f", "y"], [["zzz", "no"]])
    ds = encode(novel, schema)
    assert ds.cat[0, 0] == schema.features[0].unk_index
    with pytest.raises(DataError, match="'f'.*row 0"):
        encode(novel, schema, strict=True)


def test_encode_bad_numeric_and_bad_label():
    rows = [["1.0", "a", "no"], ["2.5", "b", "yes"], ["3.5", "a", "no"]]
    schema = infer_schema(_table(["x", "g", "y"], rows), "y",
                          overrides={"x": CONTINUOUS})
    with pytest.raises(DataError, match="non-numeric"):
        encode(_table(["x", "g", "y"], [["oops", "a", "no"]]), schema)
    with pytest.raises(DataError, match="target value"):
        encode(_table(["x", "g", "y"], [["1.0", "a", "maybe"]]), schema)


def test_missing_cells_rejected():
    with pytest.raises(DataError, match="missing value"):
        infer_schema(_table(["a", "y"], [["x", "0"], ["", "1"]]), "y")
    t = _table(["f", "y"], [["a", "no"], ["b", "yes"]])
    schema = infer_schema(t, "y")
    with pytest.raises(DataError, match="missing value"):
        encode(_table(["f", "y"], [["a", ""]]), schema)
    with pytest.raises(DataError, match="missing value"):
        encode(_table(["f", "y"], [["", "no"]]), schema)


def test_schema_json_round_trip_preserves_statistics(tmp_path):
    rows = [[repr(float(v)), "a" if i % 2 else "b", str(i % 2)]
            for i, v in enumerate(np.random.default_rng(3).normal(size=40))]
    schema = infer_schema(_table(["x", "g", "y"], rows), "y",
                          overrides={"x": CONTINUOUS})
    schema.save(tmp_path / "schema.json")
    loaded = Schema.load(tmp_path / "schema.json")
    assert loaded.hash() == schema.hash()
    x0 = next(f for f in schema.features if f.name == "x")
    x1 = next(f for f in loaded.features if f.name == "x")
    assert x0.mean == x1.mean and x0.std == x1.std  # bit-exact statistics


def test_csv_round_trip(tmp_path):
    t = _table(["f", "y"], [["hello, world", "no"], ['quo"te', "yes"]])
    write_csv(t, tmp_path / "t.csv")
    back = read_csv(tmp_path / "t.csv")
    assert back.columns == t.columns
    assert back.rows == t.rows
