"""Named parameter tensors with trainability flags."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np


@dataclass
class ParamTensor:
    """A named float64 array plus a flag saying whether optimizers may touch it."""

    name: str
    values: np.ndarray
    trainable: bool = True

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    def copy(self) -> "ParamTensor":
        return ParamTensor(self.name, self.values.copy(), self.trainable)

    def validate_finite(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"parameter {self.name!r} contains non-finite values")


@dataclass
class ParamSet:
    """Ordered collection of ParamTensors, addressable by name."""

    tensors: dict[str, ParamTensor] = field(default_factory=dict)

    def add(self, name: str, values: np.ndarray, trainable: bool = True) -> ParamTensor:
        if name in self.tensors:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = ParamTensor(name, values, trainable)
        self.tensors[name] = t
        return t

    def __getitem__(self, name: str) -> ParamTensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def __iter__(self):
        return iter(self.tensors.values())

    def names(self) -> list[str]:
        return list(self.tensors.keys())

    def copy(self) -> "ParamSet":
        return ParamSet({n: t.copy() for n, t in self.tensors.items()})

    def set_trainable(self, predicate) -> None:
        """Set each tensor's trainable flag to predicate(name)."""
        for name, t in self.tensors.items():
            t.trainable = bool(predicate(name))

    def total_size(self) -> int:
        return sum(t.size for t in self)


def fingerprint(params: ParamSet) -> str:
    """Content hash of a parameter set (names, shapes and exact values)."""
    h = hashlib.sha256()
    for t in params:
        h.update(t.name.encode())
        h.update(repr(t.shape).encode())
        h.update(t.values.astype("<f8").tobytes())
    return h.hexdigest()
