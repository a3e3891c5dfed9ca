"""Encoded datasets, deterministic stratified splits, and the synthetic
spurious-correlation generator used by the desk-scale experiments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .schema import CATEGORICAL, FeatureSpec, RawTable, Schema, reject_missing
from .utils import derive_seed


@dataclass
class EncodedDataset:
    """Integer-coded categoricals, standardized continuous columns, labels.

    cat is N x k (category indices, UNK allowed only for data encoded after
    fitting), cont is N x c standardized reals, labels are {0,1}, row_ids are
    stable identities preserved through splits and subset selection.
    """

    cat: np.ndarray
    cont: np.ndarray
    labels: np.ndarray
    row_ids: np.ndarray
    schema: Schema

    def __post_init__(self):
        n = self.cat.shape[0]
        if self.cont.shape[0] != n or self.labels.shape[0] != n or self.row_ids.shape[0] != n:
            raise DataError("cat/cont/labels/row_ids row counts differ")
        if self.cat.shape[1] != self.schema.n_categorical:
            raise DataError("categorical block width does not match schema")
        if self.cont.shape[1] != self.schema.n_continuous:
            raise DataError("continuous block width does not match schema")
        if len(np.unique(self.row_ids)) != n:
            raise DataError("row_ids must be unique")
        for j, f in enumerate(self.schema.categorical):
            col = self.cat[:, j]
            if col.size and (col.min() < 0 or col.max() > f.unk_index):
                raise DataError(f"feature {f.name!r} holds indices outside its vocabulary")

    @property
    def n(self) -> int:
        return self.cat.shape[0]

    def take(self, indices: np.ndarray) -> "EncodedDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return EncodedDataset(
            cat=self.cat[idx],
            cont=self.cont[idx],
            labels=self.labels[idx],
            row_ids=self.row_ids[idx],
            schema=self.schema,
        )

    def to_table(self) -> RawTable:
        """Decode back to raw strings (inverse of encode for in-vocab data)."""
        columns = [f.name for f in self.schema.features] + [self.schema.target_name]
        cat_feats = self.schema.categorical
        cont_feats = self.schema.continuous
        rows = []
        for i in range(self.n):
            row: dict[str, str] = {}
            for j, f in enumerate(cat_feats):
                idx = int(self.cat[i, j])
                if idx >= f.cardinality:
                    raise DataError(f"row {i}: feature {f.name!r} holds the UNK index")
                row[f.name] = f.vocabulary[idx]
            for j, f in enumerate(cont_feats):
                row[f.name] = repr(float(self.cont[i, j] * f.std + f.mean))
            row[self.schema.target_name] = self.schema.target_values[int(self.labels[i])]
            rows.append([row[c] for c in columns])
        return RawTable(columns=columns, rows=rows)


def encode(table: RawTable, schema: Schema, strict: bool = False) -> EncodedDataset:
    """Map raw strings onto the schema's indices and standardized values.

    Unknown categories map to the reserved UNK index unless strict is set,
    in which case they are an error naming the feature and row.
    """
    for f in schema.features:
        if f.name not in table.columns:
            raise DataError(f"schema feature {f.name!r} missing from table")
    if schema.target_name not in table.columns:
        raise DataError(f"target column {schema.target_name!r} missing from table")

    n = table.n
    if n == 0:
        raise DataError("cannot encode an empty table")
    for f in schema.features:
        reject_missing(f.name, table.column(f.name))
    reject_missing(schema.target_name, table.column(schema.target_name))

    cat = np.zeros((n, schema.n_categorical), dtype=np.int64)
    for j, f in enumerate(schema.categorical):
        lookup = {v: i for i, v in enumerate(f.vocabulary)}
        for i, value in enumerate(table.column(f.name)):
            idx = lookup.get(value)
            if idx is None:
                if strict:
                    raise DataError(
                        f"unseen category {value!r} for feature {f.name!r} at row {i}"
                    )
                idx = f.unk_index
            cat[i, j] = idx

    cont = np.zeros((n, schema.n_continuous), dtype=np.float64)
    for j, f in enumerate(schema.continuous):
        if not f.std > 0:
            raise DataError(f"continuous feature {f.name!r} has non-positive std")
        for i, value in enumerate(table.column(f.name)):
            try:
                x = float(value)
            except ValueError:
                raise DataError(
                    f"non-numeric value {value!r} for feature {f.name!r} at row {i}"
                ) from None
            cont[i, j] = (x - f.mean) / f.std

    labels = np.zeros(n, dtype=np.int64)
    value_to_label = {v: i for i, v in enumerate(schema.target_values)}
    for i, value in enumerate(table.column(schema.target_name)):
        lab = value_to_label.get(value)
        if lab is None:
            raise DataError(f"unexpected target value {value!r} at row {i}")
        labels[i] = lab

    return EncodedDataset(
        cat=cat, cont=cont, labels=labels, row_ids=np.arange(n, dtype=np.int64), schema=schema
    )


@dataclass
class SplitBundle:
    train: EncodedDataset
    val: EncodedDataset
    test: EncodedDataset
    ratios: tuple[float, float, float]
    seed: int

    def named(self) -> dict[str, EncodedDataset]:
        return {"train": self.train, "val": self.val, "test": self.test}


def _allocate(count: int, ratios: tuple[float, float, float]) -> list[int]:
    """Largest-remainder rounding of count * ratios (sums to count exactly)."""
    raw = [count * r for r in ratios]
    base = [int(x) for x in raw]
    short = count - sum(base)
    order = sorted(range(3), key=lambda i: (-(raw[i] - base[i]), i))
    for i in order[:short]:
        base[i] += 1
    return base


def stratified_split(ds: EncodedDataset, ratios: tuple[float, float, float],
                     seed: int) -> SplitBundle:
    """Label-stratified train/val/test split, deterministic in (inputs, seed)."""
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ConfigError("ratios must be three positive fractions")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"ratios must sum to 1, got {sum(ratios)}")

    rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "split")))
    parts: list[list[int]] = [[], [], []]
    for cls in (0, 1):
        cls_idx = np.nonzero(ds.labels == cls)[0]
        if len(cls_idx) < 3:
            raise DataError(f"class {cls} has {len(cls_idx)} rows, need at least 3")
        shuffled = cls_idx[rng.permutation(len(cls_idx))]
        counts = _allocate(len(cls_idx), tuple(ratios))
        start = 0
        for s in range(3):
            parts[s].extend(shuffled[start : start + counts[s]].tolist())
            start += counts[s]

    subsets = [ds.take(np.array(sorted(p), dtype=np.int64)) for p in parts]
    return SplitBundle(
        train=subsets[0], val=subsets[1], test=subsets[2],
        ratios=(ratios[0], ratios[1], ratios[2]), seed=seed,
    )


SYNTH_SIGNAL_AGREEMENT = 0.65   # P(informative feature == label)
SYNTH_MINORITY_POS_RATE = 0.65  # P(label=1) inside the planted minority slice


def synth_spurious(n: int, k: int, bias: float, minority_frac: float,
                   seed: int) -> EncodedDataset:
    """Synthetic dataset with a planted shortcut and a minority slice.

    Feature 0 ("spurious") agrees with the label with probability `bias` on
    majority rows and 0.5 on the minority slice. Feature 1 ("group") marks
    the minority slice with its category 0. Remaining features carry a fixed
    moderate label signal. The minority slice is exactly round(n *
    minority_frac) rows and is slightly positive-skewed so that class-wise
    slice audits keep usable support at desk scale.
    """
    if n < 100:
        raise ConfigError(f"n must be >= 100, got {n}")
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    if not 0.5 <= bias <= 1.0:
        raise ConfigError(f"bias must lie in [0.5, 1], got {bias}")
    if not 0.0 < minority_frac < 1.0:
        raise ConfigError(f"minority_frac must lie in (0, 1), got {minority_frac}")

    rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "synth")))
    minority = np.zeros(n, dtype=bool)
    n_min = int(round(n * minority_frac))
    minority[rng.choice(n, size=n_min, replace=False)] = True

    pos_rate = np.where(minority, SYNTH_MINORITY_POS_RATE, 0.5)
    y = (rng.random(n) < pos_rate).astype(np.int64)

    agree_rate = np.where(minority, 0.5, bias)
    agrees = rng.random(n) < agree_rate
    spurious = np.where(agrees, y, 1 - y).astype(np.int64)

    group = np.where(minority, 0, 1 + rng.integers(0, 3, size=n)).astype(np.int64)

    cat = np.zeros((n, k), dtype=np.int64)
    cat[:, 0] = spurious
    cat[:, 1] = group
    for j in range(2, k):
        informative = rng.random(n) < SYNTH_SIGNAL_AGREEMENT
        alt = rng.integers(0, 2, size=n)
        # Off-signal rows pick one of the two non-label categories in {0,1,2}.
        off = np.where(y == 0, 1 + alt, np.where(alt == 0, 0, 2))
        cat[:, j] = np.where(informative, y, off)

    features = [
        FeatureSpec(name="spurious", kind=CATEGORICAL, vocabulary=["c0", "c1"]),
        FeatureSpec(name="group", kind=CATEGORICAL, vocabulary=["c0", "c1", "c2", "c3"]),
    ]
    for j in range(2, k):
        features.append(
            FeatureSpec(name=f"signal{j - 1}", kind=CATEGORICAL, vocabulary=["c0", "c1", "c2"])
        )
    schema = Schema(features=features, target_name="label", target_values=["0", "1"])

    return EncodedDataset(
        cat=cat,
        cont=np.zeros((n, 0), dtype=np.float64),
        labels=y,
        row_ids=np.arange(n, dtype=np.int64),
        schema=schema,
    )
