"""End-to-end pipeline phases with phase-level resume.

Each phase writes its artifacts into the run directory and records a status
in the run manifest; a rerun with the same configuration reuses completed
phases instead of recomputing them. Phases:

  data      -> dataset.csv, schema.json, splits.json
  pretrain  -> base.bin/base.json, loss_history.csv
  robustify -> bank_jtt_w<w>/..., bank_dfr/
  train-head -> classifier_<method>.json
  eval      -> report_<method>.json, metrics/subgroups/slices.csv,
               subgroup_comparison.svg, predictions_<method>.csv

Method names: "erm" is the un-routed baseline on base latents; "jtt" and
"dfr" are routed banks (jtt reported at the grid value with the best
validation AUROC).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, metrics
from .config import PipelineConfig
from .dataset import EncodedDataset, SplitBundle, encode, stratified_split, synth_spurious
from .ensemble import Classifier, ClassifierConfig, predict, train_classifier
from .errors import ConfigError
from .kernels import BACKEND
from .model import TrainConfig, load_model, pretrain_erm, save_model
from .report import MethodReport, emit_report
from .robust import StageTwoConfig, load_bank, robustify_all, save_bank
from .schema import Schema, infer_schema, read_csv, write_csv
from .utils import sha256_file


@dataclass
class RunState:
    cfg: PipelineConfig
    out: Path
    phases: dict[str, str] = field(default_factory=dict)  # phase -> computed|reused
    artifacts: dict[str, str] = field(default_factory=dict)  # relpath -> sha256

    def record(self, phase: str, status: str, paths: list[Path]) -> None:
        self.phases[phase] = status
        for p in paths:
            self.artifacts[str(p.relative_to(self.out))] = sha256_file(p)

    def write_manifest(self) -> Path:
        manifest = {
            "tool_version": __version__,
            "kernel_backend": BACKEND,
            "config": self.cfg.to_dict(),
            "seed": self.cfg.seed,
            "phases": self.phases,
            "artifacts": dict(sorted(self.artifacts.items())),
        }
        path = self.out / "run_manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
        return path


def _config_marker(out: Path, phase: str, payload: dict, cfg: PipelineConfig,
                   outputs: list[Path]) -> tuple[bool, Path]:
    """Phase resume marker: reuse only when the recorded payload matches.

    Existing outputs under a different configuration are never silently
    replaced; that needs an explicit --overwrite.
    """
    marker = out / f".phase_{phase}.json"
    fresh = False
    if marker.exists():
        try:
            fresh = json.loads(marker.read_text()) == payload
        except json.JSONDecodeError:
            fresh = False
    if not fresh and not cfg.overwrite and any(p.exists() for p in outputs):
        raise ConfigError(
            f"{out} holds {phase} artifacts from a different configuration; "
            "pass --overwrite true or use a fresh out_dir"
        )
    return fresh, marker


def _phase_payload(cfg: PipelineConfig, keys: list[str]) -> dict:
    full = cfg.to_dict()
    return {k: full[k] for k in keys} | {"seed": cfg.seed}


def ensure_data(cfg: PipelineConfig, state: RunState) -> tuple[Schema, SplitBundle]:
    out = state.out
    payload = _phase_payload(cfg, ["data", "split"])
    csv_path, schema_path, splits_path = out / "dataset.csv", out / "schema.json", out / "splits.json"
    fresh, marker = _config_marker(out, "data", payload, cfg,
                                   [csv_path, schema_path, splits_path])

    if fresh and csv_path.exists() and schema_path.exists() and splits_path.exists():
        schema = Schema.load(schema_path)
        table = read_csv(csv_path)
        ds = encode(table, schema)
        split_info = json.loads(splits_path.read_text())
        id_to_pos = {int(r): i for i, r in enumerate(ds.row_ids)}
        parts = {
            name: ds.take(np.array([id_to_pos[r] for r in split_info[name]], dtype=np.int64))
            for name in ("train", "val", "test")
        }
        splits = SplitBundle(train=parts["train"], val=parts["val"], test=parts["test"],
                             ratios=tuple(split_info["ratios"]), seed=split_info["seed"])
        state.record("data", "reused", [csv_path, schema_path, splits_path])
        return schema, splits

    if cfg.data.csv:
        table = read_csv(cfg.data.csv, delimiter=cfg.data.delimiter)
        if cfg.data.row_cap:
            table.rows = table.rows[: cfg.data.row_cap]
        schema = infer_schema(
            table, cfg.data.target,
            positive_label=cfg.data.positive_label or None,
        )
        ds = encode(table, schema)
    else:
        s = cfg.data.synth
        ds = synth_spurious(s.n, s.k, s.bias, s.minority_frac, cfg.seed)
        if cfg.data.row_cap:
            ds = ds.take(np.arange(min(cfg.data.row_cap, ds.n)))
        schema = ds.schema
        table = ds.to_table()

    write_csv(table, csv_path)
    schema.save(schema_path)
    splits = stratified_split(ds, cfg.split.ratios, cfg.seed)
    splits_path.write_text(json.dumps({
        "ratios": list(cfg.split.ratios),
        "seed": cfg.seed,
        "train": splits.train.row_ids.tolist(),
        "val": splits.val.row_ids.tolist(),
        "test": splits.test.row_ids.tolist(),
    }))
    marker.write_text(json.dumps(payload))
    state.record("data", "computed", [csv_path, schema_path, splits_path])
    return schema, splits


def ensure_pretrain(cfg: PipelineConfig, state: RunState, splits: SplitBundle):
    out = state.out
    payload = _phase_payload(cfg, ["data", "split", "model", "stage1"])
    bin_path, man_path, hist_path = out / "base.bin", out / "base.json", out / "loss_history.csv"
    fresh, marker = _config_marker(out, "pretrain", payload, cfg,
                                   [bin_path, man_path, hist_path])

    if fresh and bin_path.exists() and man_path.exists():
        state.record("pretrain", "reused", [bin_path, man_path, hist_path])
        return load_model(bin_path, man_path)

    tc = TrainConfig(d=cfg.model.d, variant=cfg.model.variant, mask_rate=cfg.model.mask_rate,
                     epochs=cfg.stage1.epochs, lr=cfg.stage1.lr,
                     batch_size=cfg.stage1.batch_size)
    base, history = pretrain_erm(splits.train, tc, cfg.seed)
    save_model(base, bin_path, man_path)
    with open(hist_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "mean_loss"])
        for i, loss in enumerate(history):
            w.writerow([i, loss])
    marker.write_text(json.dumps(payload))
    state.record("pretrain", "computed", [bin_path, man_path, hist_path])
    return base


def _bank_dir(out: Path, strategy: str, w: float | None) -> Path:
    if strategy == "jtt":
        tag = f"{w:g}".replace(".", "p")
        return out / f"bank_jtt_w{tag}"
    return out / "bank_dfr"


def ensure_banks(cfg: PipelineConfig, state: RunState, base, splits: SplitBundle) -> dict:
    """Returns {"jtt": {w: bank}, "dfr": bank} for the configured strategies."""
    out = state.out
    payload = _phase_payload(cfg, ["data", "split", "model", "stage1", "stage2"])
    fresh, marker = _config_marker(out, "robustify", payload, cfg,
                                   list(out.glob("bank_*/manifest.json")))

    banks: dict = {}
    all_paths: list[Path] = []
    reused = True
    for strategy in cfg.stage2.strategies():
        grid = cfg.stage2.upweight_grid() if strategy == "jtt" else [None]
        for w in grid:
            d = _bank_dir(out, strategy, w)
            s2 = StageTwoConfig(epochs=cfg.stage2.epochs, lr=cfg.stage2.lr,
                                batch_size=cfg.stage2.batch_size,
                                mask_rate=None,
                                upweight=w if w is not None else StageTwoConfig.upweight,
                                dfr_train_encoder=cfg.stage2.dfr_train_encoder)
            if fresh and (d / "manifest.json").exists():
                bank = load_bank(d)
            else:
                bank = robustify_all(base, splits, strategy, s2, cfg.seed)
                save_bank(bank, d)
                reused = False
            if strategy == "jtt":
                banks.setdefault("jtt", {})[w] = bank
            else:
                banks["dfr"] = bank
            all_paths.extend(sorted(d.glob("*")))
    if not fresh:
        marker.write_text(json.dumps(payload))
        reused = False
    state.record("robustify", "reused" if reused else "computed", all_paths)
    return banks


def _head_config(cfg: PipelineConfig) -> ClassifierConfig:
    return ClassifierConfig(epochs=cfg.head.epochs, lr=cfg.head.lr,
                            batch_size=cfg.head.batch_size,
                            threshold=cfg.head.threshold, routing=cfg.head.routing)


def ensure_heads(cfg: PipelineConfig, state: RunState, base, banks: dict,
                 splits: SplitBundle) -> dict[str, tuple]:
    """Returns method -> (artifact, Classifier); jtt reports its best grid
    value by validation AUROC and records the whole sweep."""
    out = state.out
    payload = _phase_payload(cfg, ["data", "split", "model", "stage1", "stage2", "head"])
    fresh, marker = _config_marker(out, "train-head", payload, cfg,
                                   list(out.glob("classifier_*.json")))
    hc = _head_config(cfg)

    methods: dict[str, tuple] = {}
    paths: list[Path] = []
    reused = True

    def fit_or_load(name: str, artifact):
        nonlocal reused
        path = out / f"classifier_{name}.json"
        if fresh and path.exists():
            clf = Classifier.load(path)
        else:
            clf = train_classifier(artifact, splits.train, hc, cfg.seed)
            clf.save(path)
            reused = False
        paths.append(path)
        return clf

    methods["erm"] = (base, fit_or_load("erm", base))

    if "jtt" in banks:
        sweep = {}
        for w, bank in banks["jtt"].items():
            clf = fit_or_load(f"jtt_w{f'{w:g}'.replace('.', 'p')}", bank)
            scores, _, _ = predict(bank, clf, splits.val)
            sweep[w] = metrics.auroc(scores, splits.val.labels)
        best_w = max(sorted(sweep), key=lambda w: sweep[w])
        best_bank = banks["jtt"][best_w]
        best_path = out / f"classifier_jtt_w{f'{best_w:g}'.replace('.', 'p')}.json"
        chosen = out / "classifier_jtt.json"
        chosen.write_text(best_path.read_text())
        paths.append(chosen)
        (out / "jtt_sweep.json").write_text(json.dumps(
            {"val_auroc": {f"{w:g}": sweep[w] for w in sweep}, "selected": best_w}, indent=2))
        paths.append(out / "jtt_sweep.json")
        methods["jtt"] = (best_bank, Classifier.load(chosen))

    if "dfr" in banks:
        methods["dfr"] = (banks["dfr"], fit_or_load("dfr", banks["dfr"]))

    if not fresh:
        marker.write_text(json.dumps(payload))
        reused = False
    state.record("train-head", "reused" if reused else "computed", paths)
    return methods


def evaluate_method(method: str, artifact, clf: Classifier, ds: EncodedDataset,
                    split_name: str, delta: float, min_support: int) -> tuple[MethodReport, dict]:
    scores, labels, j_star = predict(artifact, clf, ds)
    report = metrics.confusion_metrics(labels, ds.labels)
    report.auroc = metrics.auroc(scores, ds.labels)
    subgroups = metrics.subgroup_accuracy(labels, ds, target_class=1)
    slices = [
        metrics.discover_slices(labels, ds, target_class=c, delta=delta,
                                min_support=min_support)
        for c in (1, 0)
    ]
    mrep = MethodReport(method=method, split=split_name, metrics=report,
                        subgroups=subgroups, slices=slices)
    preds = {
        "row_id": ds.row_ids,
        "j_star": j_star,
        "score": scores,
        "label": labels,
    }
    return mrep, preds


def ensure_eval(cfg: PipelineConfig, state: RunState, methods: dict[str, tuple],
                splits: SplitBundle) -> list[MethodReport]:
    out = state.out
    reports: list[MethodReport] = []
    paths: list[Path] = []
    for method, (artifact, clf) in methods.items():
        mrep, preds = evaluate_method(method, artifact, clf, splits.test, "test",
                                      cfg.eval.delta, cfg.eval.min_support)
        reports.append(mrep)
        pred_path = out / f"predictions_{method}.csv"
        with open(pred_path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["row_id", "j_star", "score", "label"])
            for i in range(len(preds["row_id"])):
                j = "" if preds["j_star"] is None else int(preds["j_star"][i])
                w.writerow([int(preds["row_id"][i]), j,
                            repr(float(preds["score"][i])), int(preds["label"][i])])
        paths.append(pred_path)
    paths.extend(emit_report(reports, out, cfg.eval.format_set()))
    state.record("eval", "computed", paths)
    return reports


def _prepare_out(cfg: PipelineConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def run_synth(cfg: PipelineConfig) -> Path:
    """Write the synthetic dataset CSV plus its schema JSON."""
    cfg.validate()
    if cfg.data.csv:
        raise ConfigError("synth writes a synthetic dataset; data.csv must be empty")
    out = _prepare_out(cfg)
    csv_path, schema_path = out / "dataset.csv", out / "schema.json"
    for p in (csv_path, schema_path):
        if p.exists() and not cfg.overwrite:
            raise ConfigError(f"{p} exists; pass --overwrite to replace it")
    s = cfg.data.synth
    ds = synth_spurious(s.n, s.k, s.bias, s.minority_frac, cfg.seed)
    write_csv(ds.to_table(), csv_path)
    ds.schema.save(schema_path)
    return out


def run_pretrain(cfg: PipelineConfig) -> Path:
    cfg.validate()
    out = _prepare_out(cfg)
    state = RunState(cfg, out)
    _, splits = ensure_data(cfg, state)
    ensure_pretrain(cfg, state, splits)
    state.write_manifest()
    return out


def run_robustify(cfg: PipelineConfig) -> Path:
    cfg.validate()
    out = _prepare_out(cfg)
    state = RunState(cfg, out)
    _, splits = ensure_data(cfg, state)
    base = ensure_pretrain(cfg, state, splits)
    ensure_banks(cfg, state, base, splits)
    state.write_manifest()
    return out


def run_train_head(cfg: PipelineConfig) -> Path:
    cfg.validate()
    out = _prepare_out(cfg)
    state = RunState(cfg, out)
    _, splits = ensure_data(cfg, state)
    base = ensure_pretrain(cfg, state, splits)
    banks = ensure_banks(cfg, state, base, splits)
    ensure_heads(cfg, state, base, banks, splits)
    state.write_manifest()
    return out


def run_eval(cfg: PipelineConfig) -> Path:
    cfg.validate()
    out = _prepare_out(cfg)
    state = RunState(cfg, out)
    _, splits = ensure_data(cfg, state)
    base = ensure_pretrain(cfg, state, splits)
    banks = ensure_banks(cfg, state, base, splits)
    methods = ensure_heads(cfg, state, base, banks, splits)
    ensure_eval(cfg, state, methods, splits)
    state.write_manifest()
    return out


def run_pipeline(cfg: PipelineConfig) -> Path:
    """All phases: data, pretrain, robustify, train-head, eval."""
    return run_eval(cfg)
