"""Pipeline configuration: defaults, JSON loading, dotted-flag overrides.

Every leaf field is reachable from the command line as --<dotted.name>, and
validation rejects out-of-range values before any work starts. TABDRO_SEED
overrides the built-in default seed (an explicit config or flag wins).
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

from .errors import ConfigError

DEFAULT_SEED = 43


def _default_seed() -> int:
    env = os.environ.get("TABDRO_SEED")
    if env is None:
        return DEFAULT_SEED
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"TABDRO_SEED must be an integer, got {env!r}") from None


@dataclass
class SynthSpec:
    n: int = 4000
    k: int = 4
    bias: float = 0.95
    minority_frac: float = 0.1


@dataclass
class DataConfig:
    csv: str = ""           # path to an RFC-4180 CSV; empty means synthetic
    target: str = "label"
    positive_label: str = ""  # empty: minority target value is positive
    row_cap: int = 0          # 0 = no cap
    delimiter: str = ","
    synth: SynthSpec = field(default_factory=SynthSpec)


@dataclass
class SplitConfig:
    train: float = 0.70
    val: float = 0.15
    test: float = 0.15

    @property
    def ratios(self) -> tuple[float, float, float]:
        return (self.train, self.val, self.test)


@dataclass
class ModelConfig:
    d: int = 192
    variant: str = "mlp"
    mask_rate: float = 0.15


@dataclass
class Stage1Config:
    epochs: int = 35
    lr: float = 0.01
    batch_size: int = 1024


@dataclass
class Stage2Config:
    strategy: str = "both"  # jtt | dfr | both
    upweight: str = "20"    # comma-separated grid; best picked by val AUROC
    epochs: int = 10
    lr: float = 0.01
    batch_size: int = 1024
    dfr_train_encoder: bool = False  # head-only retraining is the default

    def upweight_grid(self) -> list[float]:
        try:
            grid = [float(x) for x in str(self.upweight).split(",") if x.strip()]
        except ValueError:
            raise ConfigError(f"stage2.upweight must be numbers, got {self.upweight!r}") from None
        if not grid:
            raise ConfigError("stage2.upweight grid is empty")
        return grid

    def strategies(self) -> list[str]:
        if self.strategy == "both":
            return ["jtt", "dfr"]
        return [self.strategy]


@dataclass
class HeadConfig:
    epochs: int = 100
    lr: float = 0.01
    batch_size: int = 256
    threshold: float = 0.5
    routing: str = "base"  # base | specialized


@dataclass
class EvalConfig:
    delta: float = 0.05
    min_support: int = 30
    formats: str = "json,csv,svg"

    def format_set(self) -> list[str]:
        return [x.strip() for x in self.formats.split(",") if x.strip()]


@dataclass
class PipelineConfig:
    data: DataConfig = field(default_factory=DataConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    stage1: Stage1Config = field(default_factory=Stage1Config)
    stage2: Stage2Config = field(default_factory=Stage2Config)
    head: HeadConfig = field(default_factory=HeadConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    seed: int = field(default_factory=_default_seed)
    out_dir: str = "runs/run"
    overwrite: bool = False

    def validate(self) -> "PipelineConfig":
        def check(cond: bool, message: str):
            if not cond:
                raise ConfigError(message)

        s = self.data.synth
        check(s.n >= 100, f"data.synth.n must be >= 100, got {s.n}")
        check(s.k >= 2, f"data.synth.k must be >= 2, got {s.k}")
        check(0.5 <= s.bias <= 1.0, f"data.synth.bias must lie in [0.5, 1], got {s.bias}")
        check(0.0 < s.minority_frac < 1.0,
              f"data.synth.minority_frac must lie in (0, 1), got {s.minority_frac}")
        check(self.data.row_cap >= 0, f"data.row_cap must be >= 0, got {self.data.row_cap}")
        for name in ("train", "val", "test"):
            check(getattr(self.split, name) > 0, f"split.{name} must be positive")
        check(abs(sum(self.split.ratios) - 1.0) <= 1e-9,
              f"split ratios must sum to 1, got {sum(self.split.ratios)}")
        check(self.model.d >= 2, f"model.d must be >= 2, got {self.model.d}")
        check(self.model.variant in ("mlp", "attn-lite"),
              f"model.variant must be mlp or attn-lite, got {self.model.variant!r}")
        check(0.0 <= self.model.mask_rate < 1.0,
              f"model.mask_rate must lie in [0, 1), got {self.model.mask_rate}")
        for stage, cfg in (("stage1", self.stage1), ("stage2", self.stage2),
                           ("head", self.head)):
            check(cfg.epochs >= 1, f"{stage}.epochs must be >= 1, got {cfg.epochs}")
            check(cfg.lr > 0, f"{stage}.lr must be positive, got {cfg.lr}")
            check(cfg.batch_size >= 1, f"{stage}.batch_size must be >= 1, got {cfg.batch_size}")
        check(self.stage2.strategy in ("jtt", "dfr", "both"),
              f"stage2.strategy must be jtt, dfr or both, got {self.stage2.strategy!r}")
        for w in self.stage2.upweight_grid():
            check(w >= 1.0, f"stage2.upweight values must be >= 1, got {w}")
        check(self.head.routing in ("base", "specialized"),
              f"head.routing must be base or specialized, got {self.head.routing!r}")
        check(0.0 < self.head.threshold < 1.0,
              f"head.threshold must lie in (0, 1), got {self.head.threshold}")
        check(self.eval.delta >= 0, f"eval.delta must be >= 0, got {self.eval.delta}")
        check(self.eval.min_support >= 1,
              f"eval.min_support must be >= 1, got {self.eval.min_support}")
        for fmt in self.eval.format_set():
            check(fmt in ("json", "csv", "svg"), f"eval.formats: unknown format {fmt!r}")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        cfg = cls()
        _apply_dict(cfg, d, prefix="")
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        return cls.from_dict(raw)

    def apply_overrides(self, pairs: dict[str, str]) -> "PipelineConfig":
        for dotted, raw in pairs.items():
            _set_dotted(self, dotted, raw)
        return self


def _apply_dict(obj, d: dict, prefix: str) -> None:
    names = {f.name: f for f in fields(obj)}
    for key, value in d.items():
        if key not in names:
            raise ConfigError(f"unknown config field {prefix + key!r}")
        current = getattr(obj, key)
        if is_dataclass(current):
            if not isinstance(value, dict):
                raise ConfigError(f"config field {prefix + key!r} must be an object")
            _apply_dict(current, value, prefix + key + ".")
        else:
            setattr(obj, key, _coerce(prefix + key, value, type(current)))


def _coerce(dotted: str, raw, target_type):
    if target_type is bool:
        if isinstance(raw, bool):
            return raw
        if str(raw).lower() in ("1", "true", "yes"):
            return True
        if str(raw).lower() in ("0", "false", "no"):
            return False
        raise ConfigError(f"{dotted}: expected a boolean, got {raw!r}")
    try:
        return target_type(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{dotted}: expected {target_type.__name__}, got {raw!r}") from None


def _set_dotted(cfg, dotted: str, raw: str) -> None:
    obj = cfg
    parts = dotted.split(".")
    for part in parts[:-1]:
        if not hasattr(obj, part) or not is_dataclass(getattr(obj, part)):
            raise ConfigError(f"unknown config field {dotted!r}")
        obj = getattr(obj, part)
    leaf = parts[-1]
    if not hasattr(obj, leaf) or is_dataclass(getattr(obj, leaf)):
        raise ConfigError(f"unknown config field {dotted!r}")
    setattr(obj, leaf, _coerce(dotted, raw, type(getattr(obj, leaf))))


def dotted_fields(cfg: PipelineConfig | None = None) -> list[tuple[str, type]]:
    """Every overridable leaf as (dotted name, python type)."""
    cfg = cfg or PipelineConfig()
    out: list[tuple[str, type]] = []

    def walk(obj, prefix: str):
        for f in fields(obj):
            value = getattr(obj, f.name)
            if is_dataclass(value):
                walk(value, prefix + f.name + ".")
            else:
                out.append((prefix + f.name, type(value)))

    walk(cfg, "")
    return out
