"""Binary classification metrics, per-subgroup accuracy, and slice discovery.

A slice is a (feature, category) cell inside one target class whose error
rate exceeds the class's overall error rate by at least delta, with at
least min_support rows backing it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import EncodedDataset
from .errors import ConfigError, DataError


@dataclass
class MetricsReport:
    n: int
    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    auroc: float | None = None
    precision_degenerate: bool = False  # no predicted positives
    recall_degenerate: bool = False     # no true positives

    def to_dict(self) -> dict:
        return {
            "n": self.n, "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "accuracy": self.accuracy, "precision": self.precision,
            "recall": self.recall, "f1": self.f1, "auroc": self.auroc,
            "precision_degenerate": self.precision_degenerate,
            "recall_degenerate": self.recall_degenerate,
        }


def _check_binary(arr: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.ndim != 1 or arr.size == 0:
        raise DataError(f"{name} must be a non-empty vector")
    if not np.isin(arr, (0, 1)).all():
        raise DataError(f"{name} must be binary (0/1)")
    return arr.astype(np.int64)


def confusion_metrics(pred_labels, true_labels) -> MetricsReport:
    """Standard confusion-matrix metrics with positive class 1. Degenerate
    precision/recall (empty denominator) report 0 with a flag instead of
    failing, since subgroup cells are often tiny."""
    pred = _check_binary(pred_labels, "pred_labels")
    true = _check_binary(true_labels, "true_labels")
    if pred.shape != true.shape:
        raise DataError(f"length mismatch: {pred.shape[0]} predictions, {true.shape[0]} labels")

    tp = int(((pred == 1) & (true == 1)).sum())
    fp = int(((pred == 1) & (true == 0)).sum())
    tn = int(((pred == 0) & (true == 0)).sum())
    fn = int(((pred == 0) & (true == 1)).sum())
    n = pred.shape[0]

    precision_degenerate = (tp + fp) == 0
    recall_degenerate = (tp + fn) == 0
    precision = 0.0 if precision_degenerate else tp / (tp + fp)
    recall = 0.0 if recall_degenerate else tp / (tp + fn)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return MetricsReport(
        n=n, tp=tp, fp=fp, tn=tn, fn=fn,
        accuracy=(tp + tn) / n, precision=precision, recall=recall, f1=f1,
        precision_degenerate=precision_degenerate, recall_degenerate=recall_degenerate,
    )


def auroc(scores, true_labels) -> float:
    """Probability a random positive outscores a random negative, ties half.

    Computed with average ranks (tie-corrected), which matches exhaustive
    pair counting exactly.
    """
    y = _check_binary(true_labels, "true_labels")
    s = np.asarray(scores, dtype=np.float64)
    if s.shape != y.shape:
        raise DataError("scores and labels must have equal length")
    n_pos = int(y.sum())
    n_neg = y.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("auroc needs both classes present")

    order = np.argsort(s, kind="stable")
    ranks = np.empty(s.shape[0], dtype=np.float64)
    sorted_scores = s[order]
    i = 0
    while i < len(sorted_scores):
        j = i
        while j + 1 < len(sorted_scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0  # average 1-based rank
        i = j + 1
    u = float(ranks[y == 1].sum()) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


@dataclass
class SubgroupCell:
    feature: str
    category: str
    n: int
    accuracy: float


def _category_label(f, idx: int) -> str:
    return f.vocabulary[idx] if idx < f.cardinality else "__unk__"


def subgroup_accuracy(preds, ds: EncodedDataset, target_class: int) -> list[SubgroupCell]:
    """Accuracy per (categorical feature, category) among rows of one class;
    empty cells are omitted."""
    pred = _check_binary(preds, "preds")
    if pred.shape[0] != ds.n:
        raise DataError("predictions are misaligned with the dataset")
    if target_class not in (0, 1):
        raise ConfigError("target_class must be 0 or 1")

    in_class = ds.labels == target_class
    cells: list[SubgroupCell] = []
    for j, f in enumerate(ds.schema.categorical):
        col = ds.cat[:, j]
        for v in range(f.cardinality + 1):  # include the UNK bucket if populated
            sel = in_class & (col == v)
            n_v = int(sel.sum())
            if n_v == 0:
                continue
            acc = float((pred[sel] == target_class).mean())
            cells.append(SubgroupCell(f.name, _category_label(f, v), n_v, acc))
    return cells


@dataclass
class SliceCell:
    feature: str
    category: str
    n: int
    error_rate: float
    flagged: bool


@dataclass
class SliceReport:
    target_class: int
    overall_error: float
    delta: float
    min_support: int
    cells: list[SliceCell] = field(default_factory=list)

    def flagged(self) -> list[SliceCell]:
        return [c for c in self.cells if c.flagged]


def discover_slices(preds, ds: EncodedDataset, target_class: int, delta: float,
                    min_support: int) -> SliceReport:
    """Flag every (feature, category) cell whose error rate within the class
    exceeds the overall class error rate by delta, given enough support."""
    if delta < 0:
        raise ConfigError("delta must be >= 0")
    if min_support < 1:
        raise ConfigError("min_support must be >= 1")
    pred = _check_binary(preds, "preds")
    if pred.shape[0] != ds.n:
        raise DataError("predictions are misaligned with the dataset")

    in_class = ds.labels == target_class
    n_class = int(in_class.sum())
    if n_class == 0:
        raise DataError(f"no rows with label {target_class}")
    overall_error = float((pred[in_class] != target_class).mean())

    cells: list[SliceCell] = []
    for j, f in enumerate(ds.schema.categorical):
        col = ds.cat[:, j]
        for v in range(f.cardinality + 1):
            sel = in_class & (col == v)
            n_v = int(sel.sum())
            if n_v == 0:
                continue
            e_v = float((pred[sel] != target_class).mean())
            flagged = (e_v >= overall_error + delta) and (n_v >= min_support)
            cells.append(SliceCell(f.name, _category_label(f, v), n_v, e_v, flagged))
    return SliceReport(
        target_class=target_class, overall_error=overall_error,
        delta=delta, min_support=min_support, cells=cells,
    )
