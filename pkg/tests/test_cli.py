"""CLI contract: exit codes, determinism, resume, config plumbing."""

import json
import time

import pytest

from tabdro.cli import build_parser, config_from_args, main
from tabdro.config import PipelineConfig
from tabdro.utils import sha256_file

TINY = [
    "--data.synth.n", "400", "--data.synth.k", "3", "--model.d", "8",
    "--stage1.epochs", "2", "--stage2.epochs", "1", "--head.epochs", "10",
    "--eval.min_support", "5",
]


def test_defaults_follow_reference_settings():
    cfg = PipelineConfig()
    assert cfg.model.d == 192
    assert cfg.stage1.epochs == 35
    assert cfg.stage1.lr == 0.01
    assert cfg.stage1.batch_size == 1024
    assert cfg.stage2.epochs == 10
    assert cfg.head.epochs == 100
    assert cfg.seed == 43
    assert cfg.split.ratios == (0.70, 0.15, 0.15)


def test_config_file_and_flag_precedence(tmp_path):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({"model": {"d": 32}, "seed": 7}))
    parser = build_parser()
    args = parser.parse_args(["pretrain", "--config", str(cfg_file), "--model.d", "16"])
    cfg = config_from_args(args)
    assert cfg.model.d == 16  # flag beats file
    assert cfg.seed == 7      # file beats default


def test_env_seed_override(monkeypatch):
    monkeypatch.setenv("TABDRO_SEED", "123")
    assert PipelineConfig().seed == 123
    monkeypatch.setenv("TABDRO_SEED", "abc")
    from tabdro.errors import ConfigError

    with pytest.raises(ConfigError):
        PipelineConfig()


def test_unknown_config_field_rejected(tmp_path):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({"modle": {"d": 32}}))
    rc = main(["pretrain", "--config", str(cfg_file), "--out_dir", str(tmp_path / "o")])
    assert rc == 2


def test_synth_writes_files_and_is_byte_deterministic(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    for out in (out1, out2):
        rc = main(["synth", "--data.synth.n", "200", "--out_dir", str(out)])
        assert rc == 0
        assert (out / "dataset.csv").exists() and (out / "schema.json").exists()
    assert sha256_file(out1 / "dataset.csv") == sha256_file(out2 / "dataset.csv")


def test_synth_refuses_overwrite_without_flag(tmp_path):
    out = tmp_path / "s"
    assert main(["synth", "--data.synth.n", "200", "--out_dir", str(out)]) == 0
    assert main(["synth", "--data.synth.n", "200", "--out_dir", str(out)]) == 2
    assert main(["synth", "--data.synth.n", "200", "--out_dir", str(out),
                 "--overwrite", "true"]) == 0


def test_invalid_field_exit_code_and_message(tmp_path, capsys):
    rc = main(["synth", "--data.synth.bias", "1.2", "--out_dir", str(tmp_path / "x")])
    assert rc == 2
    assert "data.synth.bias" in capsys.readouterr().err


def test_unknown_strategy_exit_code(tmp_path):
    rc = main(["pipeline", "--stage2.strategy", "groupdro",
               "--out_dir", str(tmp_path / "x")])
    assert rc == 2


def test_missing_csv_is_data_error(tmp_path):
    rc = main(["pretrain", "--data.csv", str(tmp_path / "missing.csv"),
               "--out_dir", str(tmp_path / "x")])
    assert rc == 3


def test_pretrain_tiny_run_completes_quickly(tmp_path):
    start = time.monotonic()
    rc = main(["pretrain", "--out_dir", str(tmp_path / "p"),
               "--data.synth.n", "500", "--model.d", "16", "--stage1.epochs", "5"])
    elapsed = time.monotonic() - start
    assert rc == 0
    assert elapsed < 60.0
    out = tmp_path / "p"
    assert (out / "base.bin").exists()
    with open(out / "loss_history.csv") as f:
        lines = f.read().strip().splitlines()
    assert lines[0] == "epoch,mean_loss"
    assert len(lines) == 6


def test_rerun_same_config_identical_checkpoint_hash(tmp_path):
    args = ["pretrain", "--data.synth.n", "300", "--model.d", "8",
            "--stage1.epochs", "2"]
    assert main(args + ["--out_dir", str(tmp_path / "r1")]) == 0
    assert main(args + ["--out_dir", str(tmp_path / "r2")]) == 0
    assert sha256_file(tmp_path / "r1" / "base.bin") == sha256_file(tmp_path / "r2" / "base.bin")


def test_pipeline_emits_all_method_artifacts(tmp_path):
    out = tmp_path / "pipe"
    assert main(["pipeline", "--out_dir", str(out)] + TINY) == 0
    for method in ("erm", "jtt", "dfr"):
        assert (out / f"report_{method}.json").exists()
        assert (out / f"predictions_{method}.csv").exists()
        assert (out / f"classifier_{method}.json").exists()
    for name in ("metrics.csv", "subgroups.csv", "slices.csv",
                 "subgroup_comparison.svg", "run_manifest.json"):
        assert (out / name).exists()
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["config"]["stage1"]["batch_size"] == 1024  # defaults echoed
    assert manifest["config"]["seed"] == 43
    assert set(manifest["phases"]) == {"data", "pretrain", "robustify",
                                       "train-head", "eval"}


def test_pipeline_resume_after_interruption(tmp_path):
    """Killing a run after pretrain must not retrain on the next invocation."""
    out = tmp_path / "resume"
    args = ["pipeline", "--out_dir", str(out)] + TINY
    assert main(args) == 0
    base_hash = sha256_file(out / "base.bin")
    final_report = (out / "report_dfr.json").read_text()

    # simulate an interruption between robustify and train-head
    for p in list(out.glob("classifier_*.json")) + list(out.glob("report_*.json")):
        p.unlink()
    (out / ".phase_train-head.json").unlink()
    assert main(args) == 0
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["phases"]["data"] == "reused"
    assert manifest["phases"]["pretrain"] == "reused"
    assert manifest["phases"]["robustify"] == "reused"
    assert manifest["phases"]["train-head"] == "computed"
    assert sha256_file(out / "base.bin") == base_hash
    assert (out / "report_dfr.json").read_text() == final_report


def test_conflicting_config_needs_overwrite(tmp_path):
    out = tmp_path / "c"
    assert main(["pipeline", "--out_dir", str(out)] + TINY) == 0
    rc = main(["pipeline", "--out_dir", str(out), "--data.synth.n", "500",
               "--data.synth.k", "3", "--model.d", "8", "--stage1.epochs", "2",
               "--stage2.epochs", "1", "--head.epochs", "10",
               "--eval.min_support", "5"])
    assert rc == 2


def test_upweight_grid_builds_a_bank_per_value(tmp_path):
    out = tmp_path / "grid"
    rc = main(["train-head", "--out_dir", str(out), "--stage2.strategy", "jtt",
               "--stage2.upweight", "20,50,100", "--data.synth.n", "400",
               "--data.synth.k", "3", "--model.d", "8", "--stage1.epochs", "2",
               "--stage2.epochs", "1", "--head.epochs", "5"])
    assert rc == 0
    for tag in ("w20", "w50", "w100"):
        manifest = json.loads((out / f"bank_jtt_{tag}" / "manifest.json").read_text())
        assert manifest["strategy"] == "jtt"
        for entry in manifest["features"]:
            assert "error_set_size" in entry["meta"]
    sweep = json.loads((out / "jtt_sweep.json").read_text())
    assert set(sweep["val_auroc"]) == {"20", "50", "100"}
    assert sweep["selected"] in (20, 50, 100)
    best = f"classifier_jtt_w{sweep['selected']:g}.json"
    assert (out / "classifier_jtt.json").read_text() == (out / best).read_text()


def test_dfr_bank_manifest_records_balance_counts(tmp_path):
    out = tmp_path / "dfrbank"
    rc = main(["robustify", "--out_dir", str(out), "--stage2.strategy", "dfr",
               "--data.synth.n", "400", "--data.synth.k", "3", "--model.d", "8",
               "--stage1.epochs", "2", "--stage2.epochs", "1"])
    assert rc == 0
    manifest = json.loads((out / "bank_dfr" / "manifest.json").read_text())
    for entry in manifest["features"]:
        assert entry["meta"]["per_category_count"] >= 1
        assert "seed" in entry["meta"]


def test_report_json_validates_against_schema(tmp_path):
    from tabdro.report import validate_report

    out = tmp_path / "v"
    assert main(["pipeline", "--out_dir", str(out)] + TINY) == 0
    for method in ("erm", "jtt", "dfr"):
        validate_report(json.loads((out / f"report_{method}.json").read_text()))


def test_pipeline_on_csv_with_continuous_features(tmp_path):
    """Real-CSV ingestion end to end: mixed categorical/continuous columns."""
    import csv as csv_mod

    import numpy as np

    rng = np.random.default_rng(0)
    src = tmp_path / "mixed.csv"
    with open(src, "w", newline="") as f:
        w = csv_mod.writer(f)
        w.writerow(["color", "size", "score", "weight", "label"])
        for _ in range(300):
            y = int(rng.integers(0, 2))
            color = ["red", "blue", "green"][int(rng.integers(0, 3))]
            size = ["s", "m", "l"][y if rng.random() < 0.7 else int(rng.integers(0, 3))]
            score = float(rng.normal(loc=y, scale=1.0))
            weight = float(rng.normal(loc=50 + 5 * y, scale=3.0))
            w.writerow([color, size, repr(score), repr(weight), str(y)])

    out = tmp_path / "run"
    rc = main(["pipeline", "--out_dir", str(out), "--data.csv", str(src),
               "--data.target", "label", "--model.d", "8",
               "--stage1.epochs", "2", "--stage2.epochs", "1",
               "--head.epochs", "10", "--eval.min_support", "3"])
    assert rc == 0
    schema = json.loads((out / "schema.json").read_text())
    kinds = {f["name"]: f["kind"] for f in schema["features"]}
    assert kinds == {"color": "categorical", "size": "categorical",
                     "score": "continuous", "weight": "continuous"}
    report = json.loads((out / "report_dfr.json").read_text())
    assert 0.0 <= report["metrics"]["auroc"] <= 1.0
    # subgroup/slice tables only cover categorical features
    assert {c["feature"] for c in report["subgroups"]} <= {"color", "size"}


def test_row_cap_limits_ingestion(tmp_path):
    out = tmp_path / "cap"
    rc = main(["pretrain", "--out_dir", str(out), "--data.synth.n", "500",
               "--data.row_cap", "200", "--model.d", "8", "--stage1.epochs", "1"])
    assert rc == 0
    splits = json.loads((out / "splits.json").read_text())
    assert len(splits["train"]) + len(splits["val"]) + len(splits["test"]) == 200


def test_pipeline_attention_variant(tmp_path):
    out = tmp_path / "attn"
    rc = main(["pipeline", "--out_dir", str(out), "--model.variant", "attn-lite"]
              + TINY)
    assert rc == 0
    manifest = json.loads((out / "base.json").read_text())
    assert manifest["meta"]["variant"] == "attn-lite"
    assert any(t["name"] == "enc.wq" for t in manifest["tensors"])


def test_eval_formats_subset(tmp_path):
    out = tmp_path / "fmt"
    rc = main(["pipeline", "--out_dir", str(out), "--eval.formats", "json"] + TINY)
    assert rc == 0
    assert (out / "report_erm.json").exists()
    assert not (out / "metrics.csv").exists()
    assert not (out / "subgroup_comparison.svg").exists()


def test_cli_argparse_usage_error_is_exit_2():
    with pytest.raises(SystemExit) as exc:
        build_parser().parse_args(["not-a-command"])
    assert exc.value.code == 2
