"""Dataset schemas: feature typing, vocabularies, and CSV ingestion.

A Schema is fitted once on raw string data and then reused everywhere, so
category indices and continuous standardization are bit-identical between
training and later inference.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError
from .utils import canonical_json, sha256_text

DEFAULT_MAX_CARD = 64

CATEGORICAL = "categorical"
CONTINUOUS = "continuous"


@dataclass
class RawTable:
    """A header row plus string-valued data rows (RFC-4180 CSV contents)."""

    columns: list[str]
    rows: list[list[str]]

    def __post_init__(self):
        for i, row in enumerate(self.rows):
            if len(row) != len(self.columns):
                raise DataError(
                    f"row {i} has {len(row)} cells, header has {len(self.columns)}"
                )

    @property
    def n(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list[str]:
        try:
            j = self.columns.index(name)
        except ValueError:
            raise DataError(f"column {name!r} not present in table") from None
        return [row[j] for row in self.rows]


def read_csv(path: str | Path, delimiter: str = ",") -> RawTable:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [row for row in reader if row]
    return RawTable(columns=header, rows=rows)


def write_csv(table: RawTable, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(table.columns)
        writer.writerows(table.rows)


@dataclass
class FeatureSpec:
    name: str
    kind: str  # CATEGORICAL or CONTINUOUS
    vocabulary: list[str] = field(default_factory=list)  # categorical only
    mean: float = 0.0  # continuous only
    std: float = 1.0

    @property
    def cardinality(self) -> int:
        return len(self.vocabulary)

    @property
    def unk_index(self) -> int:
        """Reserved index for values outside the vocabulary (embedding-only)."""
        return self.cardinality


@dataclass
class Schema:
    features: list[FeatureSpec]
    target_name: str
    target_values: list[str]  # [negative, positive]

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise DataError("feature names must be unique")
        if self.target_name in names:
            raise DataError("target column listed among features")
        if len(self.target_values) != 2:
            raise DataError("target must have exactly two values")
        if self.n_categorical < 1:
            raise DataError("schema needs at least one categorical feature")
        for f in self.features:
            if f.kind == CATEGORICAL and f.cardinality < 2:
                raise DataError(f"categorical feature {f.name!r} has cardinality < 2")
            if f.kind == CONTINUOUS and not f.std > 0:
                raise DataError(f"continuous feature {f.name!r} has non-positive std")

    @property
    def categorical(self) -> list[FeatureSpec]:
        return [f for f in self.features if f.kind == CATEGORICAL]

    @property
    def continuous(self) -> list[FeatureSpec]:
        return [f for f in self.features if f.kind == CONTINUOUS]

    @property
    def n_categorical(self) -> int:
        return len(self.categorical)

    @property
    def n_continuous(self) -> int:
        return len(self.continuous)

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "target_name": self.target_name,
            "target_values": list(self.target_values),
            "features": [
                {
                    "name": f.name,
                    "kind": f.kind,
                    "vocabulary": list(f.vocabulary),
                    "mean": f.mean,
                    "std": f.std,
                }
                for f in self.features
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        return cls(
            features=[
                FeatureSpec(
                    name=e["name"],
                    kind=e["kind"],
                    vocabulary=list(e.get("vocabulary", [])),
                    mean=float(e.get("mean", 0.0)),
                    std=float(e.get("std", 1.0)),
                )
                for e in d["features"]
            ],
            target_name=d["target_name"],
            target_values=list(d["target_values"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "Schema":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def hash(self) -> str:
        return sha256_text(canonical_json(self.to_dict()))


def reject_missing(name: str, values: list[str]) -> None:
    """Missing cells are rejected outright; no imputation is offered."""
    for i, v in enumerate(values):
        if v == "":
            raise DataError(f"missing value in column {name!r} at row {i}")


def _try_float(value: str) -> float | None:
    try:
        x = float(value)
    except ValueError:
        return None
    return x if math.isfinite(x) else None


def infer_schema(table: RawTable, target_name: str,
                 overrides: dict[str, str] | None = None,
                 max_card: int = DEFAULT_MAX_CARD,
                 positive_label: str | None = None) -> Schema:
    """Classify columns and fit vocabularies / standardization statistics.

    All-numeric columns with more than max_card distinct values become
    continuous; everything else is categorical with a first-appearance
    vocabulary. overrides maps column name -> kind to force a choice.
    The less frequent target value becomes the positive class unless
    positive_label says otherwise.
    """
    overrides = overrides or {}
    if table.n == 0:
        raise DataError("cannot infer a schema from an empty table")
    if target_name not in table.columns:
        raise DataError(f"target column {target_name!r} not present")
    for name in overrides:
        if name not in table.columns:
            raise DataError(f"override for unknown column {name!r}")
    for name in table.columns:
        reject_missing(name, table.column(name))

    features: list[FeatureSpec] = []
    for name in table.columns:
        if name == target_name:
            continue
        values = table.column(name)
        distinct = list(dict.fromkeys(values))  # first-appearance order
        if len(distinct) < 2:
            raise DataError(f"column {name!r} is constant; refusing degenerate input")

        floats = [_try_float(v) for v in values]
        all_numeric = all(x is not None for x in floats)
        kind = overrides.get(name)
        if kind is None:
            kind = CONTINUOUS if all_numeric and len(distinct) > max_card else CATEGORICAL
        elif kind not in (CATEGORICAL, CONTINUOUS):
            raise DataError(f"override for {name!r} must be categorical or continuous")

        if kind == CONTINUOUS:
            if not all_numeric:
                raise DataError(f"column {name!r} cannot be continuous: non-numeric values")
            n = len(floats)
            mean = sum(floats) / n
            var = sum((x - mean) ** 2 for x in floats) / n
            std = math.sqrt(var)
            if not std > 0:
                raise DataError(f"column {name!r} has zero variance")
            features.append(FeatureSpec(name=name, kind=CONTINUOUS, mean=mean, std=std))
        else:
            features.append(FeatureSpec(name=name, kind=CATEGORICAL, vocabulary=distinct))

    target_col = table.column(target_name)
    target_distinct = list(dict.fromkeys(target_col))
    if len(target_distinct) != 2:
        raise DataError(
            f"target {target_name!r} must have exactly two distinct values, "
            f"found {len(target_distinct)}"
        )
    if positive_label is not None:
        if positive_label not in target_distinct:
            raise DataError(f"positive label {positive_label!r} not among target values")
        negative = next(v for v in target_distinct if v != positive_label)
        target_values = [negative, positive_label]
    else:
        # Minority value is the positive class; on a tie the later-seen value is.
        counts = {v: target_col.count(v) for v in target_distinct}
        first, second = target_distinct
        if counts[first] < counts[second]:
            target_values = [second, first]
        else:
            target_values = [first, second]

    return Schema(features=features, target_name=target_name, target_values=target_values)
