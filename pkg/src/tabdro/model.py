"""Encoder-decoder over tabular features with per-feature reconstruction heads.

Inputs are embedded per feature (categorical lookup tables with reserved
UNK/MASK rows, continuous scale/shift/mask vectors), encoded by either a
dense stack ("mlp") or a single-head self-attention block followed by the
same stack ("attn-lite"), mean-pooled into a latent z, and decoded by one
linear head per feature. The reconstruction loss sums cross-entropy over all
categorical features and squared error over all continuous features, masked
and unmasked alike; masking only corrupts the inputs.

All forward/backward passes are hand-derived against the kernel primitives
and validated by the finite-difference checker in gradcheck.py.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .dataset import EncodedDataset
from .errors import ConfigError, DataError, NumericError
from .optim import AdamState, adam_step
from .schema import Schema
from .tensor import ParamSet
from .utils import derive_seed

VARIANTS = ("mlp", "attn-lite")

DEFAULT_DIM = 192
DEFAULT_MASK_RATE = 0.15


@dataclass
class TrainConfig:
    d: int = DEFAULT_DIM
    variant: str = "mlp"
    mask_rate: float = DEFAULT_MASK_RATE
    epochs: int = 35
    lr: float = 0.01
    batch_size: int = 1024


@dataclass
class ModelParams:
    schema: Schema
    d: int
    variant: str
    params: ParamSet
    meta: dict = field(default_factory=dict)

    def copy(self) -> "ModelParams":
        return ModelParams(self.schema, self.d, self.variant, self.params.copy(),
                           dict(self.meta))

    def cat_names(self) -> list[str]:
        return [f.name for f in self.schema.categorical]

    def head_param_names(self, feature_name: str) -> tuple[str, str]:
        return f"head.{feature_name}.w", f"head.{feature_name}.b"


@dataclass
class MaskedBatch:
    """Original rows plus the corruption applied to them.

    Loss targets always come from the uncorrupted cat/cont blocks; the
    corrupted blocks feed the embeddings (categorical MASK index, continuous
    zero plus a mask-indicator channel).
    """

    schema: Schema
    cat: np.ndarray        # (B, k) original indices
    cont: np.ndarray       # (B, c) original standardized values
    mask: np.ndarray       # (B, k + c) bool
    cat_corr: np.ndarray   # (B, k) with MASK index where masked
    cont_corr: np.ndarray  # (B, c) zeroed where masked
    row_ids: np.ndarray

    @property
    def n(self) -> int:
        return self.cat.shape[0]


@dataclass
class LatentBatch:
    z: np.ndarray  # (N, d)
    row_ids: np.ndarray


@dataclass
class Reconstruction:
    cat_logits: list[np.ndarray]  # one (N, cardinality_j) block per categorical
    cont_pred: np.ndarray         # (N, c)


def mask_index(cardinality: int) -> int:
    """Embedding row used for masked categorical cells (after the UNK row)."""
    return cardinality + 1


def init_model(schema: Schema, d: int, variant: str, seed: int) -> ModelParams:
    """Seed-deterministic scaled-uniform initialization; biases start at zero."""
    if d < 2:
        raise ConfigError(f"latent dimension must be >= 2, got {d}")
    if variant not in VARIANTS:
        raise ConfigError(f"unknown encoder variant {variant!r}, expected one of {VARIANTS}")

    rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "init", variant, d)))
    params = ParamSet()

    def uniform(shape, fan_in):
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    for f in schema.categorical:
        params.add(f"emb.{f.name}", uniform((f.cardinality + 2, d), d))
    for f in schema.continuous:
        params.add(f"emb.{f.name}.w", uniform((d,), d))
        params.add(f"emb.{f.name}.b", np.zeros(d))
        params.add(f"emb.{f.name}.m", uniform((d,), d))

    if variant == "attn-lite":
        params.add("enc.wq", uniform((d, d), d))
        params.add("enc.wk", uniform((d, d), d))
        params.add("enc.wv", uniform((d, d), d))
    params.add("enc.w1", uniform((d, d), d))
    params.add("enc.b1", np.zeros(d))
    params.add("enc.w2", uniform((d, d), d))
    params.add("enc.b2", np.zeros(d))

    for f in schema.categorical:
        params.add(f"head.{f.name}.w", uniform((d, f.cardinality), d))
        params.add(f"head.{f.name}.b", np.zeros(f.cardinality))
    for f in schema.continuous:
        params.add(f"head.{f.name}.w", uniform((d, 1), d))
        params.add(f"head.{f.name}.b", np.zeros(1))

    return ModelParams(schema=schema, d=d, variant=variant, params=params)


def _draw_mask(rng: np.random.Generator, n: int, n_features: int, rate: float) -> np.ndarray:
    mask = rng.random((n, n_features)) < rate
    if rate > 0.0:
        # Guarantee at least one unmasked feature per row by redrawing offenders.
        for i in np.nonzero(mask.all(axis=1))[0]:
            row = mask[i]
            while row.all():
                row = rng.random(n_features) < rate
            mask[i] = row
    return mask


def _corrupt(ds: EncodedDataset, mask: np.ndarray) -> MaskedBatch:
    k = ds.schema.n_categorical
    cat_corr = ds.cat.copy()
    for j, f in enumerate(ds.schema.categorical):
        cat_corr[mask[:, j], j] = mask_index(f.cardinality)
    cont_corr = np.where(mask[:, k:], 0.0, ds.cont)
    return MaskedBatch(
        schema=ds.schema, cat=ds.cat, cont=ds.cont, mask=mask,
        cat_corr=cat_corr, cont_corr=cont_corr, row_ids=ds.row_ids,
    )


def apply_mask(ds: EncodedDataset, rate: float, seed: int) -> MaskedBatch:
    """Independently mask each cell with probability rate, never a whole row."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"mask rate must lie in [0, 1), got {rate}")
    rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "mask")))
    n_features = ds.schema.n_categorical + ds.schema.n_continuous
    return _corrupt(ds, _draw_mask(rng, ds.n, n_features, rate))


def clean_batch(ds: EncodedDataset) -> MaskedBatch:
    n_features = ds.schema.n_categorical + ds.schema.n_continuous
    return _corrupt(ds, np.zeros((ds.n, n_features), dtype=bool))


def _check_schema(params: ModelParams, schema: Schema) -> None:
    if params.schema.hash() != schema.hash():
        raise DataError("batch schema does not match model schema")


def _forward(params: ModelParams, batch: MaskedBatch, need_cache: bool):
    _check_schema(params, batch.schema)
    p = params.params
    schema = params.schema
    k, c, d = schema.n_categorical, schema.n_continuous, params.d
    n_feat = k + c
    n = batch.n

    tokens = np.empty((n, n_feat, d), dtype=np.float64)
    cont_vals: list[np.ndarray] = []
    cont_masks: list[np.ndarray] = []
    for j, f in enumerate(schema.categorical):
        tokens[:, j, :] = p[f"emb.{f.name}"].values[batch.cat_corr[:, j]]
    for l, f in enumerate(schema.continuous):
        v = batch.cont_corr[:, l]
        mk = batch.mask[:, k + l].astype(np.float64)
        cont_vals.append(v)
        cont_masks.append(mk)
        tokens[:, k + l, :] = (
            v[:, None] * p[f"emb.{f.name}.w"].values[None, :]
            + p[f"emb.{f.name}.b"].values[None, :]
            + mk[:, None] * p[f"emb.{f.name}.m"].values[None, :]
        )

    attn = None
    if params.variant == "attn-lite":
        flat = np.ascontiguousarray(tokens.reshape(n * n_feat, d))
        q = kernels.matmul(flat, p["enc.wq"].values).reshape(n, n_feat, d)
        kk = kernels.matmul(flat, p["enc.wk"].values).reshape(n, n_feat, d)
        v3 = kernels.matmul(flat, p["enc.wv"].values).reshape(n, n_feat, d)
        scale = 1.0 / math.sqrt(d)
        scores = kernels.bmm_nt(np.ascontiguousarray(q), np.ascontiguousarray(kk))
        scores *= scale
        attn_w = kernels.softmax_rows(np.ascontiguousarray(scores))
        out = kernels.bmm_nn(np.ascontiguousarray(attn_w), np.ascontiguousarray(v3))
        enc_tokens = tokens + out
        attn = (flat, q, kk, v3, attn_w, scale)
    else:
        enc_tokens = tokens

    pooled = np.zeros((n, d), dtype=np.float64)
    for f_idx in range(n_feat):
        pooled += enc_tokens[:, f_idx, :]
    pooled /= n_feat

    a1 = kernels.matmul(pooled, p["enc.w1"].values) + p["enc.b1"].values[None, :]
    g = kernels.gelu_fwd(a1)
    a2 = kernels.matmul(g, p["enc.w2"].values) + p["enc.b2"].values[None, :]
    z = pooled + a2

    cache = None
    if need_cache:
        cache = {
            "tokens": tokens, "attn": attn, "pooled": pooled, "a1": a1, "g": g,
            "cont_vals": cont_vals, "cont_masks": cont_masks,
        }
    return z, cache


def forward_latent(params: ModelParams, batch: MaskedBatch | EncodedDataset) -> LatentBatch:
    """Latent representation z for each row (deterministic, row-independent)."""
    if isinstance(batch, EncodedDataset):
        batch = clean_batch(batch)
    z, _ = _forward(params, batch, need_cache=False)
    if not np.all(np.isfinite(z)):
        raise NumericError("non-finite values in the latent representation")
    return LatentBatch(z=z, row_ids=batch.row_ids.copy())


def reconstruct(params: ModelParams, latents: LatentBatch) -> Reconstruction:
    """Per-feature decoder outputs: logit blocks for categoricals, scalars
    for continuous features."""
    z = latents.z
    if z.ndim != 2 or z.shape[1] != params.d:
        raise DataError(f"latent dimension {z.shape} does not match model d={params.d}")
    p = params.params
    cat_logits = []
    for f in params.schema.categorical:
        logits = kernels.matmul(z, p[f"head.{f.name}.w"].values)
        logits += p[f"head.{f.name}.b"].values[None, :]
        cat_logits.append(logits)
    n = z.shape[0]
    cont_pred = np.zeros((n, params.schema.n_continuous), dtype=np.float64)
    for l, f in enumerate(params.schema.continuous):
        pred = kernels.matmul(z, p[f"head.{f.name}.w"].values)
        cont_pred[:, l] = pred[:, 0] + p[f"head.{f.name}.b"].values[0]
    return Reconstruction(cat_logits=cat_logits, cont_pred=cont_pred)


def _cat_targets(schema: Schema, cat: np.ndarray, j: int) -> np.ndarray:
    f = schema.categorical[j]
    targets = np.ascontiguousarray(cat[:, j], dtype=np.int64)
    if targets.size and targets.max() >= f.cardinality:
        raise DataError(
            f"feature {f.name!r} holds values outside its vocabulary; "
            "reconstruction targets must be in-vocabulary"
        )
    return targets


def mlm_loss(outputs: Reconstruction, targets: EncodedDataset | MaskedBatch,
             cat_weights: np.ndarray | None = None):
    """Masked-reconstruction loss.

    Returns (total, per_feature, per_sample_per_feature) where total is the
    mean over samples of the summed per-feature terms: cross-entropy for
    each categorical feature, squared error for each continuous one. When
    cat_weights (N x k) is given, the categorical terms are multiplied by it
    row-wise (the upweighted fine-tuning objective; all-ones reproduces the
    plain loss exactly).
    """
    schema = targets.schema
    cat, cont = targets.cat, targets.cont
    n = cat.shape[0]
    k, c = schema.n_categorical, schema.n_continuous
    if len(outputs.cat_logits) != k or outputs.cont_pred.shape[1] != c:
        raise DataError("outputs do not match the schema's feature blocks")
    if any(block.shape[0] != n for block in outputs.cat_logits) or (
        c and outputs.cont_pred.shape[0] != n
    ):
        raise DataError("outputs and targets are misaligned")
    if cat_weights is None:
        cat_weights = np.ones((n, k), dtype=np.float64)
    elif cat_weights.shape != (n, k):
        raise DataError(f"cat_weights must have shape {(n, k)}")

    per_sample = np.zeros((n, k + c), dtype=np.float64)
    for j in range(k):
        tj = _cat_targets(schema, cat, j)
        wj = np.ascontiguousarray(cat_weights[:, j])
        loss_vec, _ = kernels.softmax_xent(
            np.ascontiguousarray(outputs.cat_logits[j]), tj, wj
        )
        per_sample[:, j] = loss_vec
    for l in range(c):
        diff = outputs.cont_pred[:, l] - cont[:, l]
        per_sample[:, k + l] = diff * diff

    per_feature = kernels.colsum(per_sample) / n
    total = 0.0
    for f_idx in range(k + c):  # fixed summation order
        total += per_feature[f_idx]
    return float(total), per_feature, per_sample


def loss_and_grads(params: ModelParams, batch: MaskedBatch,
                   cat_weights: np.ndarray | None = None):
    """Loss plus analytic gradients for every parameter (one fused pass)."""
    p = params.params
    schema = params.schema
    k, c, d = schema.n_categorical, schema.n_continuous, params.d
    n_feat = k + c
    n = batch.n
    if cat_weights is None:
        cat_weights = np.ones((n, k), dtype=np.float64)

    z, cache = _forward(params, batch, need_cache=True)
    grads: dict[str, np.ndarray] = {}
    dz = np.zeros_like(z)
    per_sample = np.zeros((n, n_feat), dtype=np.float64)

    for j, f in enumerate(schema.categorical):
        logits = kernels.matmul(z, p[f"head.{f.name}.w"].values)
        logits += p[f"head.{f.name}.b"].values[None, :]
        tj = _cat_targets(schema, batch.cat, j)
        wj = np.ascontiguousarray(cat_weights[:, j])
        loss_vec, dlogits = kernels.softmax_xent(np.ascontiguousarray(logits), tj, wj)
        per_sample[:, j] = loss_vec
        dlogits *= 1.0 / n
        grads[f"head.{f.name}.w"] = kernels.matmul_at_b(z, dlogits)
        grads[f"head.{f.name}.b"] = kernels.colsum(dlogits)
        dz += kernels.matmul_a_bt(dlogits, p[f"head.{f.name}.w"].values)

    for l, f in enumerate(schema.continuous):
        w = p[f"head.{f.name}.w"].values
        pred = kernels.matmul(z, w)[:, 0] + p[f"head.{f.name}.b"].values[0]
        diff = pred - batch.cont[:, l]
        per_sample[:, k + l] = diff * diff
        dpred = (2.0 / n) * diff
        grads[f"head.{f.name}.w"] = kernels.matmul_at_b(z, np.ascontiguousarray(dpred[:, None]))
        grads[f"head.{f.name}.b"] = np.array([float(dpred.sum())])
        dz += dpred[:, None] * w[:, 0][None, :]

    per_feature = kernels.colsum(per_sample) / n
    total = 0.0
    for f_idx in range(n_feat):
        total += per_feature[f_idx]

    # Dense stack backward: z = pooled + W2 gelu(W1 pooled + b1) + b2.
    pooled, a1, g = cache["pooled"], cache["a1"], cache["g"]
    da2 = dz
    dpooled = dz.copy()
    grads["enc.b2"] = kernels.colsum(da2)
    grads["enc.w2"] = kernels.matmul_at_b(g, da2)
    dg = kernels.matmul_a_bt(da2, p["enc.w2"].values)
    da1 = kernels.gelu_bwd(a1, dg)
    grads["enc.b1"] = kernels.colsum(da1)
    grads["enc.w1"] = kernels.matmul_at_b(pooled, da1)
    dpooled += kernels.matmul_a_bt(da1, p["enc.w1"].values)

    denc_tokens = np.broadcast_to(dpooled[:, None, :] / n_feat, (n, n_feat, d))

    if params.variant == "attn-lite":
        flat, q, kk, v3, attn_w, scale = cache["attn"]
        dout = np.ascontiguousarray(denc_tokens)
        dtokens = denc_tokens.copy()  # residual branch
        dattn_w = kernels.bmm_nt(dout, np.ascontiguousarray(v3))
        dv3 = kernels.bmm_tn(np.ascontiguousarray(attn_w), dout)
        dscores = kernels.softmax_rows_bwd(np.ascontiguousarray(attn_w), dattn_w)
        dscores *= scale
        dq = kernels.bmm_nn(np.ascontiguousarray(dscores), np.ascontiguousarray(kk))
        dk = kernels.bmm_tn(np.ascontiguousarray(dscores), np.ascontiguousarray(q))
        dq_flat = np.ascontiguousarray(dq.reshape(n * n_feat, d))
        dk_flat = np.ascontiguousarray(dk.reshape(n * n_feat, d))
        dv_flat = np.ascontiguousarray(dv3.reshape(n * n_feat, d))
        grads["enc.wq"] = kernels.matmul_at_b(flat, dq_flat)
        grads["enc.wk"] = kernels.matmul_at_b(flat, dk_flat)
        grads["enc.wv"] = kernels.matmul_at_b(flat, dv_flat)
        dflat = kernels.matmul_a_bt(dq_flat, p["enc.wq"].values)
        dflat += kernels.matmul_a_bt(dk_flat, p["enc.wk"].values)
        dflat += kernels.matmul_a_bt(dv_flat, p["enc.wv"].values)
        dtokens += dflat.reshape(n, n_feat, d)
    else:
        dtokens = denc_tokens.copy()

    for j, f in enumerate(schema.categorical):
        table = p[f"emb.{f.name}"].values
        dtable = np.zeros_like(table)
        kernels.scatter_add_rows(
            dtable,
            np.ascontiguousarray(batch.cat_corr[:, j], dtype=np.int64),
            np.ascontiguousarray(dtokens[:, j, :]),
        )
        grads[f"emb.{f.name}"] = dtable
    for l, f in enumerate(schema.continuous):
        dtok = np.ascontiguousarray(dtokens[:, k + l, :])
        v = cache["cont_vals"][l]
        mk = cache["cont_masks"][l]
        grads[f"emb.{f.name}.w"] = kernels.colsum(v[:, None] * dtok)
        grads[f"emb.{f.name}.b"] = kernels.colsum(dtok)
        grads[f"emb.{f.name}.m"] = kernels.colsum(mk[:, None] * dtok)

    return float(total), grads


@dataclass
class LoopConfig:
    """Mini-batch training knobs shared by pre-training and fine-tuning."""

    epochs: int
    lr: float
    batch_size: int
    mask_rate: float


def train_params(model: ModelParams, data: EncodedDataset, cfg: LoopConfig, seed: int,
                 cat_weights_fn=None, rng_label: str = "train") -> list[float]:
    """Seeded mini-batch Adam loop, in place on model.params.

    cat_weights_fn(row_ids) -> (B, k) supplies per-sample categorical-term
    weights (upweighted fine-tuning); None means all ones. Returns the
    per-epoch mean loss history.
    """
    if data.n == 0:
        raise DataError("training data is empty")
    if cfg.epochs < 1:
        raise ConfigError(f"epochs must be >= 1, got {cfg.epochs}")
    if cfg.batch_size < 1:
        raise ConfigError(f"batch size must be >= 1, got {cfg.batch_size}")
    _check_schema(model, data.schema)

    rng = np.random.Generator(np.random.PCG64(derive_seed(seed, rng_label)))
    adam = AdamState(lr=cfg.lr)
    n_feat = data.schema.n_categorical + data.schema.n_continuous
    history: list[float] = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(data.n)
        epoch_loss = 0.0
        for start in range(0, data.n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            sub = data.take(idx)
            mask = _draw_mask(rng, sub.n, n_feat, cfg.mask_rate)
            batch = _corrupt(sub, mask)
            weights = cat_weights_fn(sub.row_ids) if cat_weights_fn is not None else None
            loss, grads = loss_and_grads(model, batch, weights)
            if not math.isfinite(loss):
                raise NumericError(
                    f"non-finite loss at epoch {epoch}, rows {start}..{start + sub.n}"
                )
            adam_step(model.params, grads, adam)
            epoch_loss += loss * sub.n
        history.append(epoch_loss / data.n)
    return history


def save_model(model: ModelParams, bin_path, manifest_path) -> None:
    """Self-contained checkpoint: binary blob plus manifest embedding the
    schema, encoder variant, latent dimension and training metadata."""
    from .checkpoint import save_tensors

    meta = {
        "schema": model.schema.to_dict(),
        "schema_hash": model.schema.hash(),
        "d": model.d,
        "variant": model.variant,
        "model_meta": model.meta,
    }
    save_tensors(model.params, bin_path, manifest_path, meta)


def load_model(bin_path, manifest_path) -> ModelParams:
    from .checkpoint import load_tensors

    params, meta = load_tensors(bin_path, manifest_path)
    schema = Schema.from_dict(meta["schema"])
    model = ModelParams(schema=schema, d=int(meta["d"]), variant=meta["variant"],
                        params=params, meta=dict(meta.get("model_meta", {})))
    if model.schema.hash() != meta["schema_hash"]:
        raise DataError("checkpoint schema hash does not match its manifest")
    return model


def pretrain_erm(train: EncodedDataset, config: TrainConfig, seed: int):
    """Stage-1 pre-training of every parameter against the reconstruction
    loss on masked batches. Returns (ModelParams, per-epoch mean loss)."""
    model = init_model(train.schema, config.d, config.variant, seed)
    loop = LoopConfig(epochs=config.epochs, lr=config.lr,
                      batch_size=config.batch_size, mask_rate=config.mask_rate)
    history = train_params(model, train, loop, seed, rng_label="pretrain")
    model.meta = {
        "stage": "base",
        "mask_rate": config.mask_rate,
        "train_seed": seed,
        "epochs": config.epochs,
        "lr": config.lr,
        "batch_size": config.batch_size,
    }
    return model, history
