"""Feature routing and the downstream classifier.

At inference each row is scored by how badly the base checkpoint
reconstructs each categorical feature; the worst-reconstructed feature's
specialized checkpoint supplies the latent representation. A single logistic
layer trained on those representations (or on the base latents, for the
plain baseline) produces the final score. Routing never reads the label.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .dataset import EncodedDataset
from .errors import ConfigError, DataError
from .model import ModelParams, clean_batch, forward_latent, reconstruct
from .robust import ModelBank
from .tensor import fingerprint
from .utils import derive_seed

MODE_BANK = "bank"
MODE_BASE = "base"

ROUTE_BASE = "base"           # per-feature losses under the base checkpoint
ROUTE_SPECIALIZED = "specialized"  # per-feature losses under each specialized one


@dataclass
class ClassifierConfig:
    epochs: int = 100
    lr: float = 0.01
    batch_size: int = 256
    threshold: float = 0.5
    routing: str = ROUTE_BASE


@dataclass
class RoutedRepresentation:
    row_id: int
    j_star: int
    losses: np.ndarray  # per-categorical-feature reconstruction loss
    z: np.ndarray


@dataclass
class Classifier:
    """Binary logistic layer over d-dimensional representations."""

    weights: np.ndarray
    bias: float
    mode: str                # MODE_BANK or MODE_BASE
    artifact_fingerprint: str
    threshold: float = 0.5
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "classifier_version": 1,
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "mode": self.mode,
            "artifact_fingerprint": self.artifact_fingerprint,
            "threshold": self.threshold,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Classifier":
        return cls(
            weights=np.asarray(d["weights"], dtype=np.float64),
            bias=float(d["bias"]),
            mode=d["mode"],
            artifact_fingerprint=d["artifact_fingerprint"],
            threshold=float(d.get("threshold", 0.5)),
            meta=dict(d.get("meta", {})),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "Classifier":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _per_feature_losses(bank: ModelBank, ds: EncodedDataset, routing: str) -> np.ndarray:
    """(N, k) clean-input reconstruction losses; UNK cells are NaN (a head
    cannot emit the reserved index, so those features never win the argmax)."""
    schema = bank.base.schema
    k = schema.n_categorical
    losses = np.full((ds.n, k), np.nan, dtype=np.float64)

    def fill(j: int, model: ModelParams, rec=None):
        if rec is None:
            rec = reconstruct(model, forward_latent(model, clean_batch(ds)))
        f = schema.categorical[j]
        valid = ds.cat[:, j] < f.cardinality
        if valid.any():
            idx = np.nonzero(valid)[0]
            loss_vec, _ = kernels.softmax_xent(
                np.ascontiguousarray(rec.cat_logits[j][idx]),
                np.ascontiguousarray(ds.cat[idx, j], dtype=np.int64),
                np.ones(idx.size),
            )
            losses[idx, j] = loss_vec

    if routing == ROUTE_BASE:
        rec = reconstruct(bank.base, forward_latent(bank.base, clean_batch(ds)))
        for j in range(k):
            fill(j, bank.base, rec)
    elif routing == ROUTE_SPECIALIZED:
        for j in range(k):
            fill(j, bank.specialized[j])
    else:
        raise ConfigError(f"unknown routing mode {routing!r}")
    return losses


def _argmax_losses(losses: np.ndarray) -> np.ndarray:
    if np.all(np.isnan(losses), axis=1).any():
        raise DataError("a row has no in-vocabulary categorical feature to route on")
    filled = np.where(np.isnan(losses), -np.inf, losses)
    return np.argmax(filled, axis=1)  # first max: ties go to the lowest index


def select_feature(bank: ModelBank, row: EncodedDataset,
                   routing: str = ROUTE_BASE) -> tuple[int, np.ndarray]:
    """Index of the worst-reconstructed categorical feature for one row."""
    losses = _per_feature_losses(bank, row, routing)
    return int(_argmax_losses(losses)[0]), losses[0]


def route_batch(bank: ModelBank, ds: EncodedDataset,
                routing: str = ROUTE_BASE) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(z, j_star, losses) for every row; z comes from the specialized
    checkpoint of each row's selected feature."""
    losses = _per_feature_losses(bank, ds, routing)
    j_star = _argmax_losses(losses)
    z = np.zeros((ds.n, bank.base.d), dtype=np.float64)
    for j in sorted(set(j_star.tolist())):
        rows = np.nonzero(j_star == j)[0]
        lat = forward_latent(bank.specialized[j], clean_batch(ds.take(rows)))
        z[rows] = lat.z
    return z, j_star, losses


def route_representation(bank: ModelBank, row: EncodedDataset,
                         routing: str = ROUTE_BASE) -> RoutedRepresentation:
    z, j_star, losses = route_batch(bank, row, routing)
    return RoutedRepresentation(
        row_id=int(row.row_ids[0]), j_star=int(j_star[0]), losses=losses[0], z=z[0]
    )


def _sigmoid(logits: np.ndarray) -> np.ndarray:
    out = np.empty_like(logits)
    pos = logits >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-logits[pos]))
    ez = np.exp(logits[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def fit_logistic(x: np.ndarray, y: np.ndarray, config: ClassifierConfig,
                 seed: int) -> tuple[np.ndarray, float, list[float]]:
    """Mini-batch Adam on mean binary cross-entropy; returns (w, b, history)."""
    n, d = x.shape
    if len(np.unique(y)) < 2:
        raise DataError("classifier training needs both classes present")

    from .optim import AdamState, adam_step
    from .tensor import ParamSet

    params = ParamSet()
    params.add("clf.w", np.zeros(d))
    params.add("clf.b", np.zeros(1))
    adam = AdamState(lr=config.lr)
    rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "classifier")))
    yf = y.astype(np.float64)

    history = []
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            xb = np.ascontiguousarray(x[idx])
            yb = yf[idx]
            logits = kernels.matmul(xb, params["clf.w"].values[:, None])[:, 0]
            logits += params["clf.b"].values[0]
            # log(1 + e^logit) - y*logit, the stable binary cross-entropy
            loss = float(np.mean(np.logaddexp(0.0, logits) - yb * logits))
            dlogit = (_sigmoid(logits) - yb) / idx.size
            grads = {
                "clf.w": kernels.matmul_at_b(xb, np.ascontiguousarray(dlogit[:, None]))[:, 0],
                "clf.b": np.array([float(dlogit.sum())]),
            }
            adam_step(params, grads, adam)
            epoch_loss += loss * idx.size
        history.append(epoch_loss / n)
    return params["clf.w"].values.copy(), float(params["clf.b"].values[0]), history


def _representations(bank_or_base: ModelBank | ModelParams, ds: EncodedDataset,
                     routing: str) -> tuple[np.ndarray, np.ndarray | None, str, str]:
    if isinstance(bank_or_base, ModelBank):
        z, j_star, _ = route_batch(bank_or_base, ds, routing)
        return z, j_star, MODE_BANK, bank_or_base.fingerprint()
    z = forward_latent(bank_or_base, clean_batch(ds)).z
    return z, None, MODE_BASE, fingerprint(bank_or_base.params)


def train_classifier(bank_or_base: ModelBank | ModelParams, train: EncodedDataset,
                     config: ClassifierConfig, seed: int) -> Classifier:
    """Logistic layer on routed representations (bank) or base latents
    (baseline); the representation parameters stay frozen throughout."""
    z, _, mode, art = _representations(bank_or_base, train, config.routing)
    w, b, history = fit_logistic(z, train.labels, config, seed)
    return Classifier(
        weights=w, bias=b, mode=mode, artifact_fingerprint=art,
        threshold=config.threshold,
        meta={
            "epochs": config.epochs,
            "lr": config.lr,
            "batch_size": config.batch_size,
            "routing": config.routing,
            "final_loss": history[-1],
            "train_seed": seed,
        },
    )


def predict(bank_or_base: ModelBank | ModelParams, clf: Classifier, ds: EncodedDataset,
             routing: str | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Scores in (0, 1), hard labels, and j_star per row (None in base mode).

    The classifier must have been trained against the same representation
    source; mode and fingerprint are checked before any work.
    """
    routing = routing if routing is not None else clf.meta.get("routing", ROUTE_BASE)
    expected_mode = MODE_BANK if isinstance(bank_or_base, ModelBank) else MODE_BASE
    if clf.mode != expected_mode:
        raise ConfigError(
            f"classifier was trained in {clf.mode!r} mode but got a {expected_mode!r} artifact"
        )
    z, j_star, _, art = _representations(bank_or_base, ds, routing)
    if art != clf.artifact_fingerprint:
        raise ConfigError("classifier fingerprint does not match the supplied artifact")
    logits = kernels.matmul(np.ascontiguousarray(z), clf.weights[:, None])[:, 0] + clf.bias
    scores = _sigmoid(logits)
    labels = (scores >= clf.threshold).astype(np.int64)
    return scores, labels, j_star
