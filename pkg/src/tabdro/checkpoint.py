"""Checkpoint serialization: one flat binary blob plus a JSON manifest.

The blob is the concatenation of every tensor as little-endian float64 in
manifest order. The manifest records names, shapes and trainability, a
sha256 of the blob, and a free-form meta dict for the owning module.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .tensor import ParamSet
from .utils import sha256_bytes

FORMAT_VERSION = 1


def save_tensors(params: ParamSet, bin_path: str | Path, manifest_path: str | Path,
                 meta: dict | None = None) -> None:
    blob = b"".join(t.values.astype("<f8").tobytes() for t in params)
    manifest = {
        "format_version": FORMAT_VERSION,
        "blob_sha256": sha256_bytes(blob),
        "tensors": [
            {"name": t.name, "shape": list(t.shape), "trainable": t.trainable}
            for t in params
        ],
        "meta": meta or {},
    }
    Path(bin_path).write_bytes(blob)
    Path(manifest_path).write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_tensors(bin_path: str | Path, manifest_path: str | Path) -> tuple[ParamSet, dict]:
    manifest = json.loads(Path(manifest_path).read_text())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format: {manifest.get('format_version')}")
    blob = Path(bin_path).read_bytes()
    if sha256_bytes(blob) != manifest["blob_sha256"]:
        raise ValueError(f"checkpoint blob {bin_path} does not match its manifest hash")

    expected = sum(
        int(np.prod(entry["shape"], dtype=np.int64)) for entry in manifest["tensors"]
    )
    if len(blob) != expected * 8:
        raise ValueError(
            f"checkpoint blob holds {len(blob) // 8} values, manifest expects {expected}"
        )

    params = ParamSet()
    offset = 0
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(
            blob, dtype="<f8", count=size, offset=offset * 8
        ).astype(np.float64).reshape(shape)
        params.add(entry["name"], arr, trainable=bool(entry["trainable"]))
        offset += size
    return params, manifest["meta"]
