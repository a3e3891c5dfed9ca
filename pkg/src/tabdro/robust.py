"""Per-feature robustification of a pre-trained checkpoint.

Two strategies, one specialized checkpoint per categorical feature:

* jtt: find the training rows whose feature-j reconstruction is wrong under
  the base checkpoint, then fine-tune the encoder plus head j with those
  rows' feature-j term upweighted. All other heads stay frozen bit-exact.
* dfr: build a category-balanced subset of the validation split and retrain
  head j alone on it; encoder and every other head stay frozen bit-exact.

Error sets are computed once from the base checkpoint on clean (unmasked)
inputs and frozen for the whole fine-tune; input masking stays on at the
base checkpoint's rate during fine-tuning.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .dataset import EncodedDataset, SplitBundle
from .errors import ConfigError, DataError
from .model import (
    DEFAULT_MASK_RATE,
    LoopConfig,
    ModelParams,
    clean_batch,
    forward_latent,
    reconstruct,
    train_params,
)
from .tensor import fingerprint
from .utils import derive_seed

STRATEGIES = ("jtt", "dfr")

DEFAULT_STAGE2_EPOCHS = 10
DEFAULT_UPWEIGHT = 20.0


@dataclass
class StageTwoConfig:
    epochs: int = DEFAULT_STAGE2_EPOCHS
    lr: float = 0.01
    batch_size: int = 1024
    mask_rate: float | None = None  # None: inherit the base checkpoint's rate
    upweight: float = DEFAULT_UPWEIGHT
    # Head-only retraining keeps the representation fixed, which is the
    # contract the rest of the system assumes; opting in to encoder updates
    # makes dfr checkpoints diverge from the base representation.
    dfr_train_encoder: bool = False


@dataclass
class ErrorSet:
    """Training rows whose feature-j value the base checkpoint mis-reconstructs."""

    feature_index: int
    row_ids: np.ndarray
    source_fingerprint: str


@dataclass
class BalancedSubset:
    """Validation rows balanced over the categories of feature j."""

    feature_index: int
    row_ids: np.ndarray
    per_category_count: int


@dataclass
class ModelBank:
    base: ModelParams
    specialized: dict[int, ModelParams]
    strategy: str
    feature_meta: dict[int, dict] = field(default_factory=dict)

    def __post_init__(self):
        k = self.base.schema.n_categorical
        if sorted(self.specialized) != list(range(k)):
            raise DataError(f"bank needs one specialized checkpoint per categorical feature (k={k})")
        base_hash = self.base.schema.hash()
        for j, m in self.specialized.items():
            if m.schema.hash() != base_hash or m.d != self.base.d:
                raise DataError(f"specialized checkpoint {j} disagrees with the base on schema or d")

    def fingerprint(self) -> str:
        from .utils import canonical_json, sha256_text

        parts = {
            "strategy": self.strategy,
            "schema": self.base.schema.hash(),
            "base": fingerprint(self.base.params),
            "specialized": {
                str(j): fingerprint(m.params) for j, m in sorted(self.specialized.items())
            },
        }
        return sha256_text(canonical_json(parts))


def _check_cat_index(schema, j: int) -> None:
    if not 0 <= j < schema.n_categorical:
        raise ConfigError(
            f"feature index {j} out of range for {schema.n_categorical} categorical features"
        )


def predicted_categories(model: ModelParams, ds: EncodedDataset, j: int) -> np.ndarray:
    """Argmax reconstruction of feature j on clean inputs, ties to the lowest
    category index."""
    _check_cat_index(model.schema, j)
    rec = reconstruct(model, forward_latent(model, clean_batch(ds)))
    return np.argmax(rec.cat_logits[j], axis=1)


def build_error_set(base: ModelParams, train: EncodedDataset, j: int) -> ErrorSet:
    """Rows where argmax of head j on clean input differs from the true value."""
    predicted = predicted_categories(base, train, j)
    wrong = predicted != train.cat[:, j]
    return ErrorSet(
        feature_index=j,
        row_ids=train.row_ids[wrong].copy(),
        source_fingerprint=fingerprint(base.params),
    )


def build_balanced_subset(val: EncodedDataset, j: int, seed: int) -> BalancedSubset:
    """Downsample every present category of feature j to the minimum count."""
    _check_cat_index(val.schema, j)
    f = val.schema.categorical[j]
    col = val.cat[:, j]
    present = [v for v in range(f.cardinality) if int((col == v).sum()) > 0]
    absent = [v for v in range(f.cardinality) if v not in present]
    if absent:
        warnings.warn(
            f"feature {f.name!r}: categories {absent} have no validation rows; excluded"
        )
    if len(present) < 2:
        raise DataError(f"feature {f.name!r} has only one category in the validation split")

    m = min(int((col == v).sum()) for v in present)
    rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "balance", j)))
    chosen: list[int] = []
    for v in present:
        rows = np.nonzero(col == v)[0]
        picked = rng.choice(rows, size=m, replace=False)
        chosen.extend(val.row_ids[picked].tolist())
    return BalancedSubset(
        feature_index=j,
        row_ids=np.array(sorted(chosen), dtype=np.int64),
        per_category_count=m,
    )


def _resolve_mask_rate(base: ModelParams, config: StageTwoConfig) -> float:
    if config.mask_rate is not None:
        return config.mask_rate
    return float(base.meta.get("mask_rate", DEFAULT_MASK_RATE))


def jtt_finetune(base: ModelParams, train: EncodedDataset, eset: ErrorSet, w: float,
                 config: StageTwoConfig, seed: int) -> ModelParams:
    """Upweighted fine-tune of the encoder and head j, other heads frozen."""
    if w < 1.0:
        raise ConfigError(f"upweight factor must be >= 1, got {w}")
    if train.n == 0:
        raise DataError("jtt fine-tune needs a non-empty training set")
    j = eset.feature_index
    _check_cat_index(base.schema, j)
    if eset.row_ids.size == 0:
        warnings.warn("empty error set: upweighted loss reduces to the plain loss")

    feat = base.schema.categorical[j]
    head_w, head_b = base.head_param_names(feat.name)
    model = base.copy()
    model.params.set_trainable(
        lambda name: name.startswith(("emb.", "enc.")) or name in (head_w, head_b)
    )

    error_ids = np.sort(eset.row_ids)
    k = base.schema.n_categorical

    def weights_fn(row_ids: np.ndarray) -> np.ndarray:
        cw = np.ones((row_ids.shape[0], k), dtype=np.float64)
        cw[np.isin(row_ids, error_ids), j] = w
        return cw

    loop = LoopConfig(epochs=config.epochs, lr=config.lr, batch_size=config.batch_size,
                      mask_rate=_resolve_mask_rate(base, config))
    history = train_params(model, train, loop, seed, cat_weights_fn=weights_fn,
                           rng_label=f"jtt.{j}")
    model.params.set_trainable(lambda name: True)
    model.meta = {
        "stage": "jtt",
        "feature_index": j,
        "feature_name": feat.name,
        "upweight": w,
        "error_set_size": int(eset.row_ids.size),
        "epochs": config.epochs,
        "final_loss": history[-1],
        "mask_rate": loop.mask_rate,
        "train_seed": seed,
    }
    return model


def dfr_finetune(base: ModelParams, rows: EncodedDataset, j: int,
                 config: StageTwoConfig, seed: int) -> ModelParams:
    """Head-only retrain of feature j on a balanced subset; encoder frozen
    unless config.dfr_train_encoder opts out of the freezing contract."""
    if rows.n == 0:
        raise DataError("dfr fine-tune needs a non-empty balanced subset")
    _check_cat_index(base.schema, j)

    feat = base.schema.categorical[j]
    head_w, head_b = base.head_param_names(feat.name)
    model = base.copy()
    if config.dfr_train_encoder:
        model.params.set_trainable(
            lambda name: name.startswith(("emb.", "enc.")) or name in (head_w, head_b)
        )
    else:
        model.params.set_trainable(lambda name: name in (head_w, head_b))

    loop = LoopConfig(epochs=config.epochs, lr=config.lr, batch_size=config.batch_size,
                      mask_rate=_resolve_mask_rate(base, config))
    history = train_params(model, rows, loop, seed, rng_label=f"dfr.{j}")
    model.params.set_trainable(lambda name: True)
    model.meta = {
        "stage": "dfr",
        "feature_index": j,
        "feature_name": feat.name,
        "balanced_rows": int(rows.n),
        "epochs": config.epochs,
        "final_loss": history[-1],
        "mask_rate": loop.mask_rate,
        "train_seed": seed,
        "train_encoder": config.dfr_train_encoder,
    }
    return model


def save_bank(bank: ModelBank, dirpath) -> None:
    """Bank directory: base checkpoint, one checkpoint per feature, manifest."""
    import json
    from pathlib import Path

    from .model import save_model

    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    save_model(bank.base, d / "base.bin", d / "base.json")
    entries = []
    for j in sorted(bank.specialized):
        name = bank.base.schema.categorical[j].name
        save_model(bank.specialized[j], d / f"feature_{name}.bin", d / f"feature_{name}.json")
        entries.append({
            "index": j,
            "name": name,
            "files": [f"feature_{name}.bin", f"feature_{name}.json"],
            "meta": bank.feature_meta.get(j, {}),
        })
    manifest = {
        "bank_version": 1,
        "strategy": bank.strategy,
        "schema_hash": bank.base.schema.hash(),
        "fingerprint": bank.fingerprint(),
        "features": entries,
    }
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_bank(dirpath) -> ModelBank:
    import json
    from pathlib import Path

    from .model import load_model

    d = Path(dirpath)
    manifest = json.loads((d / "manifest.json").read_text())
    if manifest.get("bank_version") != 1:
        raise DataError(f"unsupported bank version: {manifest.get('bank_version')}")
    base = load_model(d / "base.bin", d / "base.json")
    specialized: dict[int, ModelParams] = {}
    feature_meta: dict[int, dict] = {}
    for entry in manifest["features"]:
        j = int(entry["index"])
        specialized[j] = load_model(d / entry["files"][0], d / entry["files"][1])
        feature_meta[j] = dict(entry.get("meta", {}))
    bank = ModelBank(base=base, specialized=specialized,
                     strategy=manifest["strategy"], feature_meta=feature_meta)
    if bank.fingerprint() != manifest["fingerprint"]:
        raise DataError(f"bank at {d} does not match its manifest fingerprint")
    return bank


def robustify_all(base: ModelParams, splits: SplitBundle, strategy: str,
                  config: StageTwoConfig, seed: int) -> ModelBank:
    """One specialized checkpoint per categorical feature (jtt uses the train
    split, dfr the validation split)."""
    if strategy not in STRATEGIES:
        raise ConfigError(f"unknown strategy {strategy!r}, expected one of {STRATEGIES}")

    specialized: dict[int, ModelParams] = {}
    feature_meta: dict[int, dict] = {}
    for j, feat in enumerate(base.schema.categorical):
        sub_seed = derive_seed(seed, "stage2", strategy, j)
        try:
            if strategy == "jtt":
                eset = build_error_set(base, splits.train, j)
                spec = jtt_finetune(base, splits.train, eset, config.upweight, config, sub_seed)
                feature_meta[j] = {
                    "feature": feat.name,
                    "error_set_size": int(eset.row_ids.size),
                    "upweight": config.upweight,
                    "epochs": config.epochs,
                    "seed": sub_seed,
                }
            else:
                subset = build_balanced_subset(splits.val, j, sub_seed)
                rows = splits.val.take(np.isin(splits.val.row_ids, subset.row_ids).nonzero()[0])
                spec = dfr_finetune(base, rows, j, config, sub_seed)
                feature_meta[j] = {
                    "feature": feat.name,
                    "per_category_count": subset.per_category_count,
                    "balanced_rows": int(rows.n),
                    "epochs": config.epochs,
                    "seed": sub_seed,
                }
        except Exception as exc:
            exc.args = (f"feature {feat.name!r}: {exc}",)
            raise
        specialized[j] = spec
    return ModelBank(base=base, specialized=specialized, strategy=strategy,
                     feature_meta=feature_meta)
