"""
MIL data model, the sparse line format, L2 normalization and a synthetic
generator with known instance labels.

File format, one instance per line::

    #dim 166
    # free comment
    1 bag_17 0:0.25 3:1.5 ...

The label is 0 or 1 (``-1`` is read as 0). A bag's instances may be spread
anywhere in the file; bags keep first-appearance order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

_LABELS = {"0": 0, "1": 1, "-1": 0, "+1": 1}


class DatasetFormatError(ValueError):
    """Raised for malformed or inconsistent MIL dataset input."""

    def __init__(self, message: str, lineno: int | None = None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


@dataclass(frozen=True, eq=False)
class Instance:
    """Sparse feature vector with strictly increasing 0-based indices."""

    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        val = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if idx.shape != val.shape:
            raise ValueError("indices and values must have the same length")
        if idx.size:
            if idx[0] < 0:
                raise ValueError("feature indices must be non-negative")
            if np.any(np.diff(idx) <= 0):
                raise ValueError("feature indices must be strictly increasing")
        if not np.all(np.isfinite(val)):
            raise ValueError("feature values must be finite")
        idx.setflags(write=False)
        val.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @classmethod
    def from_dense(cls, x: Sequence[float]) -> "Instance":
        x = np.asarray(x, dtype=np.float64)
        nz = np.flatnonzero(x)
        return cls(nz, x[nz])

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, float]]) -> "Instance":
        pairs = sorted(pairs)
        return cls([i for i, _ in pairs], [v for _, v in pairs])

    @property
    def max_index(self) -> int:
        return int(self.indices[-1]) if self.indices.size else -1

    def to_dense(self, dim: int) -> np.ndarray:
        x = np.zeros(dim)
        x[self.indices] = self.values
        return x

    def dot(self, w: np.ndarray) -> float:
        return float(np.dot(w[self.indices], self.values))

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return np.array_equal(self.indices, other.indices) and np.array_equal(
            self.values, other.values
        )

    def __hash__(self):
        return hash((self.indices.tobytes(), self.values.tobytes()))


@dataclass(frozen=True)
class Bag:
    id: str
    label: int
    instances: tuple[Instance, ...]

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"bag {self.id!r}: label must be 0 or 1, got {self.label!r}")
        object.__setattr__(self, "instances", tuple(self.instances))
        if not self.instances:
            raise ValueError(f"bag {self.id!r} has no instances")

    def __len__(self):
        return len(self.instances)

    @cached_property
    def max_index(self) -> int:
        return max(x.max_index for x in self.instances)

    @cached_property
    def coo(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(row, col, value) triplets of the bag's instance matrix."""
        rows = np.concatenate(
            [np.full(x.indices.size, j, dtype=np.int64) for j, x in enumerate(self.instances)]
        )
        cols = np.concatenate([x.indices for x in self.instances])
        vals = np.concatenate([x.values for x in self.instances])
        return rows, cols, vals

    def to_dense(self, dim: int) -> np.ndarray:
        return np.vstack([x.to_dense(dim) for x in self.instances])


@dataclass(frozen=True)
class Dataset:
    bags: tuple[Bag, ...]
    dim: int

    def __post_init__(self):
        object.__setattr__(self, "bags", tuple(self.bags))
        if not self.bags:
            raise ValueError("dataset must contain at least one bag")
        if self.dim < 1:
            raise ValueError("dim must be positive")
        seen = set()
        for b in self.bags:
            if b.id in seen:
                raise ValueError(f"duplicate bag id {b.id!r}")
            seen.add(b.id)
            if b.max_index >= self.dim:
                raise ValueError(
                    f"bag {b.id!r} has feature index {b.max_index} >= dim {self.dim}"
                )

    @property
    def n(self) -> int:
        return len(self.bags)

    @property
    def labels(self) -> np.ndarray:
        return np.array([b.label for b in self.bags], dtype=np.int64)

    def subset(self, idx: Iterable[int]) -> "Dataset":
        return Dataset(tuple(self.bags[i] for i in idx), self.dim)

    def index_of(self, bag_id: str) -> int:
        return self._id_index[bag_id]

    @cached_property
    def _id_index(self) -> dict[str, int]:
        return {b.id: i for i, b in enumerate(self.bags)}


@dataclass(frozen=True)
class GroundTruth:
    """True instance labels, aligned bag-by-bag with a Dataset."""

    labels: tuple[tuple[int, ...], ...]

    def check(self, data: Dataset) -> None:
        """Raise ValueError unless aligned with ``data`` and MIL-consistent."""
        if len(self.labels) != data.n:
            raise ValueError("ground truth does not match the number of bags")
        for b, y in zip(data.bags, self.labels):
            if len(y) != len(b):
                raise ValueError(f"ground truth for bag {b.id!r} has wrong length")
            if b.label == 0 and any(y):
                raise ValueError(f"negative bag {b.id!r} has a positive instance")
            if b.label == 1 and not any(y):
                raise ValueError(f"positive bag {b.id!r} has no positive instance")


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------


def parse_dataset(lines: Iterable[str]) -> Dataset:
    declared_dim = None
    order: list[str] = []
    labels: dict[str, int] = {}
    members: dict[str, list[Instance]] = {}
    max_index = -1

    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if parts and parts[0] == "dim":
                if len(parts) != 2:
                    raise DatasetFormatError("malformed #dim header", lineno)
                try:
                    declared_dim = int(parts[1])
                except ValueError:
                    raise DatasetFormatError(f"bad #dim value {parts[1]!r}", lineno) from None
                if declared_dim < 1:
                    raise DatasetFormatError("#dim must be positive", lineno)
            continue

        tokens = line.split()
        if len(tokens) < 2:
            raise DatasetFormatError("expected '<label> <bag_id> <idx>:<val> ...'", lineno)
        label = _LABELS.get(tokens[0])
        if label is None:
            raise DatasetFormatError(f"bad label {tokens[0]!r}", lineno)
        bag_id = tokens[1]

        pairs = {}
        for tok in tokens[2:]:
            i, sep, v = tok.partition(":")
            if not sep:
                raise DatasetFormatError(f"bad feature token {tok!r}", lineno)
            try:
                i, v = int(i), float(v)
            except ValueError:
                raise DatasetFormatError(f"bad feature token {tok!r}", lineno) from None
            if i < 0:
                raise DatasetFormatError(f"negative feature index {i}", lineno)
            if not math.isfinite(v):
                raise DatasetFormatError(f"non-finite value in {tok!r}", lineno)
            if i in pairs:
                raise DatasetFormatError(f"duplicate feature index {i}", lineno)
            if declared_dim is not None and i >= declared_dim:
                raise DatasetFormatError(f"index {i} >= declared dim {declared_dim}", lineno)
            pairs[i] = v
        inst = Instance.from_pairs(pairs.items())
        max_index = max(max_index, inst.max_index)

        if bag_id in labels:
            if labels[bag_id] != label:
                raise DatasetFormatError(f"conflicting labels for bag {bag_id!r}", lineno)
        else:
            order.append(bag_id)
            labels[bag_id] = label
            members[bag_id] = []
        members[bag_id].append(inst)

    if not order:
        raise DatasetFormatError("empty dataset")
    dim = max(max_index + 1, 1)
    if declared_dim is not None:
        if max_index >= declared_dim:
            raise DatasetFormatError(f"index {max_index} >= declared dim {declared_dim}")
        dim = declared_dim
    bags = tuple(Bag(b, labels[b], tuple(members[b])) for b in order)
    return Dataset(bags, dim)


def _fmt(v: float) -> str:
    return repr(float(v))


def serialize_dataset(data: Dataset) -> str:
    out = [f"#dim {data.dim}"]
    for b in data.bags:
        for x in b.instances:
            feats = " ".join(f"{i}:{_fmt(v)}" for i, v in zip(x.indices.tolist(), x.values))
            out.append(f"{b.label} {b.id} {feats}".rstrip())
    return "\n".join(out) + "\n"


def read_dataset(path: str | Path) -> Dataset:
    with open(path, encoding="utf-8") as f:
        return parse_dataset(f)


def write_dataset(data: Dataset, path: str | Path) -> None:
    Path(path).write_text(serialize_dataset(data), encoding="utf-8")


def serialize_ground_truth(data: Dataset, gt: GroundTruth) -> str:
    gt.check(data)
    return "".join(
        f"{b.id} {j} {y}\n" for b, ys in zip(data.bags, gt.labels) for j, y in enumerate(ys)
    )


def parse_ground_truth(lines: Iterable[str], data: Dataset) -> GroundTruth:
    """Read ``<bag_id> <pos> <y>`` lines and align them with ``data``."""
    table: dict[str, dict[int, int]] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if len(tokens) != 3 or tokens[2] not in ("0", "1"):
            raise DatasetFormatError("expected '<bag_id> <pos> <y>'", lineno)
        try:
            pos = int(tokens[1])
        except ValueError:
            raise DatasetFormatError(f"bad position {tokens[1]!r}", lineno) from None
        table.setdefault(tokens[0], {})[pos] = int(tokens[2])
    labels = []
    for b in data.bags:
        row = table.get(b.id)
        if row is None or sorted(row) != list(range(len(b))):
            raise DatasetFormatError(f"ground truth does not cover bag {b.id!r}")
        labels.append(tuple(row[j] for j in range(len(b))))
    gt = GroundTruth(tuple(labels))
    gt.check(data)
    return gt


# ---------------------------------------------------------------------------
# preprocessing
# ---------------------------------------------------------------------------


def l2_normalize(data: Dataset) -> Dataset:
    """Scale every nonzero instance to unit Euclidean norm."""
    bags = []
    for b in data.bags:
        insts = []
        for x in b.instances:
            norm = np.linalg.norm(x.values)
            insts.append(x if norm == 0 else Instance(x.indices, x.values / norm))
        bags.append(Bag(b.id, b.label, tuple(insts)))
    return Dataset(tuple(bags), data.dim)


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    """Two isotropic Gaussian blobs at +/- margin/2 along a random unit direction.

    The blobs are symmetric about the origin, so a linear model without
    intercept can separate them.
    """

    n_pos_bags: int = 20
    n_neg_bags: int = 20
    instances_per_bag: int = 20
    positive_fraction: float = 0.05
    dim: int = 100
    margin: float = 6.0
    noise: float = 1.0

    def __post_init__(self):
        if self.n_pos_bags < 1 or self.n_neg_bags < 1:
            raise ValueError("need at least one positive and one negative bag")
        if self.instances_per_bag < 1:
            raise ValueError("instances_per_bag must be >= 1")
        if not 0 < self.positive_fraction <= 1:
            raise ValueError("positive_fraction must lie in (0, 1]")
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if not self.margin > 0:
            raise ValueError("margin must be > 0")
        if not self.noise >= 0:
            raise ValueError("noise must be >= 0")

    @property
    def positives_per_bag(self) -> int:
        return max(1, round(self.positive_fraction * self.instances_per_bag))


@dataclass(frozen=True)
class SynthResult:
    data: Dataset
    truth: GroundTruth
    direction: np.ndarray = field(repr=False)

    def __iter__(self):
        # allows ``data, gt = generate_synthetic(...)``
        return iter((self.data, self.truth))


def generate_synthetic(cfg: SynthConfig, seed: int) -> SynthResult:
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(cfg.dim)
    u /= np.linalg.norm(u)
    half = 0.5 * cfg.margin
    m = cfg.instances_per_bag
    k = min(cfg.positives_per_bag, m)

    bags, truth = [], []

    def draw(n, sign):
        return sign * half * u + cfg.noise * rng.standard_normal((n, cfg.dim))

    for i in range(cfg.n_pos_bags):
        y = np.zeros(m, dtype=np.int64)
        y[rng.choice(m, size=k, replace=False)] = 1
        X = np.where(y[:, None] == 1, draw(m, 1.0), draw(m, -1.0))
        bags.append(Bag(f"pos{i:04d}", 1, tuple(Instance.from_dense(r) for r in X)))
        truth.append(tuple(int(v) for v in y))
    for i in range(cfg.n_neg_bags):
        X = draw(m, -1.0)
        bags.append(Bag(f"neg{i:04d}", 0, tuple(Instance.from_dense(r) for r in X)))
        truth.append((0,) * m)

    data = Dataset(tuple(bags), cfg.dim)
    return SynthResult(data, GroundTruth(tuple(truth)), u)
