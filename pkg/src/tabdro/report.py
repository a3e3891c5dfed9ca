"""Report emission: versioned JSON, flat CSV tables, and SVG bar charts.

The SVG output mirrors the subgroup comparison layout: one panel per
categorical feature, grouped bars (one per method) for each category,
restricted to the positive class.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .metrics import MetricsReport, SliceReport, SubgroupCell

REPORT_VERSION = 1
FORMATS = ("json", "csv", "svg")

_PALETTE = ["#4878b0", "#e1812c", "#3a923a", "#c03d3e", "#9372b2"]


@dataclass
class MethodReport:
    method: str
    split: str
    metrics: MetricsReport
    subgroups: list[SubgroupCell] = field(default_factory=list)  # positive class
    slices: list[SliceReport] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "report_version": REPORT_VERSION,
            "method": self.method,
            "split": self.split,
            "metrics": self.metrics.to_dict(),
            "subgroups": [
                {"feature": c.feature, "category": c.category, "n": c.n,
                 "accuracy": c.accuracy}
                for c in self.subgroups
            ],
            "slices": [
                {
                    "target_class": s.target_class,
                    "overall_error": s.overall_error,
                    "delta": s.delta,
                    "min_support": s.min_support,
                    "cells": [
                        {"feature": c.feature, "category": c.category, "n": c.n,
                         "error_rate": c.error_rate, "flagged": c.flagged}
                        for c in s.cells
                    ],
                }
                for s in self.slices
            ],
        }


def validate_report(d: dict) -> None:
    """Raise ValueError when a report dict does not match the schema."""

    def need(obj, key, types, where):
        if key not in obj:
            raise ValueError(f"{where}: missing key {key!r}")
        if not isinstance(obj[key], types):
            raise ValueError(f"{where}: key {key!r} has type {type(obj[key]).__name__}")
        return obj[key]

    if need(d, "report_version", int, "report") != REPORT_VERSION:
        raise ValueError(f"unsupported report_version {d['report_version']}")
    need(d, "method", str, "report")
    need(d, "split", str, "report")
    m = need(d, "metrics", dict, "report")
    for key in ("accuracy", "precision", "recall", "f1"):
        value = need(m, key, (int, float), "metrics")
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"metrics.{key} out of [0,1]: {value}")
    if m.get("auroc") is not None and not 0.0 <= m["auroc"] <= 1.0:
        raise ValueError(f"metrics.auroc out of [0,1]: {m['auroc']}")
    for key in ("n", "tp", "fp", "tn", "fn"):
        need(m, key, int, "metrics")
    if m["tp"] + m["fp"] + m["tn"] + m["fn"] != m["n"]:
        raise ValueError("confusion counts do not sum to n")
    for cell in need(d, "subgroups", list, "report"):
        need(cell, "feature", str, "subgroup")
        need(cell, "category", str, "subgroup")
        need(cell, "n", int, "subgroup")
        acc = need(cell, "accuracy", (int, float), "subgroup")
        if not 0.0 <= acc <= 1.0:
            raise ValueError(f"subgroup accuracy out of [0,1]: {acc}")
    for s in need(d, "slices", list, "report"):
        need(s, "target_class", int, "slice report")
        need(s, "overall_error", (int, float), "slice report")
        need(s, "delta", (int, float), "slice report")
        need(s, "min_support", int, "slice report")
        for cell in need(s, "cells", list, "slice report"):
            need(cell, "feature", str, "slice cell")
            need(cell, "category", str, "slice cell")
            need(cell, "n", int, "slice cell")
            need(cell, "error_rate", (int, float), "slice cell")
            need(cell, "flagged", bool, "slice cell")


def _write_metrics_csv(reports: list[MethodReport], path: Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["method", "split", "n", "accuracy", "precision", "recall", "f1",
                    "auroc", "tp", "fp", "tn", "fn"])
        for r in reports:
            m = r.metrics
            w.writerow([r.method, r.split, m.n, m.accuracy, m.precision, m.recall,
                        m.f1, "" if m.auroc is None else m.auroc, m.tp, m.fp, m.tn, m.fn])


def _write_subgroups_csv(reports: list[MethodReport], path: Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["method", "target_class", "feature", "category", "n", "accuracy"])
        for r in reports:
            for c in r.subgroups:
                w.writerow([r.method, 1, c.feature, c.category, c.n, c.accuracy])


def _write_slices_csv(reports: list[MethodReport], path: Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["method", "target_class", "feature", "category", "n",
                    "error_rate", "overall_error", "flagged"])
        for r in reports:
            for s in r.slices:
                for c in s.cells:
                    w.writerow([r.method, s.target_class, c.feature, c.category,
                                c.n, c.error_rate, s.overall_error, c.flagged])


def _svg_comparison(reports: list[MethodReport], path: Path) -> None:
    """Grouped bar chart: one panel per feature, one bar per method per
    category, positive-class accuracy on the y axis."""
    methods = [r.method for r in reports]
    features: list[str] = []
    cats: dict[str, list[str]] = {}
    acc: dict[tuple[str, str, str], float] = {}
    for r in reports:
        for c in r.subgroups:
            if c.feature not in features:
                features.append(c.feature)
                cats[c.feature] = []
            if c.category not in cats[c.feature]:
                cats[c.feature].append(c.category)
            acc[(r.method, c.feature, c.category)] = c.accuracy

    panel_h, axis_h, left, bar_w, gap, group_gap = 160, 40, 60, 14, 3, 18
    width = max(
        [left + 40 + len(cats[f]) * (len(methods) * (bar_w + gap) + group_gap)
         for f in features] + [360]
    )
    height = (panel_h + axis_h) * len(features) + 40
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" font-family="sans-serif" font-size="11">'
    ]
    for mi, m in enumerate(methods):
        parts.append(
            f'<rect x="{left + 90 * mi}" y="8" width="10" height="10" '
            f'fill="{_PALETTE[mi % len(_PALETTE)]}"/>'
            f'<text x="{left + 90 * mi + 14}" y="17">{m}</text>'
        )
    for fi, feat in enumerate(features):
        top = 30 + fi * (panel_h + axis_h)
        base_y = top + panel_h
        parts.append(f'<text x="8" y="{top + panel_h / 2}" font-weight="bold">{feat}</text>')
        parts.append(
            f'<line x1="{left}" y1="{base_y}" x2="{width - 20}" y2="{base_y}" stroke="#333"/>'
            f'<line x1="{left}" y1="{top}" x2="{left}" y2="{base_y}" stroke="#333"/>'
        )
        for frac in (0.0, 0.5, 1.0):
            y = base_y - frac * panel_h
            parts.append(f'<text x="{left - 30}" y="{y + 4}" fill="#666">{frac:.1f}</text>')
        x = left + 10
        for cat in cats[feat]:
            for mi, m in enumerate(methods):
                a = acc.get((m, feat, cat))
                if a is not None:
                    h = a * panel_h
                    parts.append(
                        f'<rect x="{x + mi * (bar_w + gap)}" y="{base_y - h}" '
                        f'width="{bar_w}" height="{h}" '
                        f'fill="{_PALETTE[mi % len(_PALETTE)]}"/>'
                    )
            cx = x + len(methods) * (bar_w + gap) / 2
            parts.append(f'<text x="{cx}" y="{base_y + 14}" text-anchor="middle">{cat}</text>')
            x += len(methods) * (bar_w + gap) + group_gap
    parts.append("</svg>")
    path.write_text("\n".join(parts))


def emit_report(reports: list[MethodReport], out_dir: str | Path,
                formats: set[str] | list[str]) -> list[Path]:
    """Write reports in the requested formats; returns the files written."""
    bad = set(formats) - set(FORMATS)
    if bad:
        raise ConfigError(f"unknown report formats: {sorted(bad)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not formats:
        warnings.warn("no report formats requested; nothing written")
        return []

    written: list[Path] = []
    if "json" in formats:
        for r in reports:
            p = out / f"report_{r.method}.json"
            p.write_text(json.dumps(r.to_dict(), indent=2))
            written.append(p)
    if "csv" in formats:
        for name, fn in (("metrics.csv", _write_metrics_csv),
                         ("subgroups.csv", _write_subgroups_csv),
                         ("slices.csv", _write_slices_csv)):
            p = out / name
            fn(reports, p)
            written.append(p)
    if "svg" in formats:
        p = out / "subgroup_comparison.svg"
        _svg_comparison(reports, p)
        written.append(p)
    return written
