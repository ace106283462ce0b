"""
EM-style miSVM baseline with a linear hinge-loss subsolver.

Every instance of a positive bag starts out positive. Each outer round fits
a linear SVM to the current instance labels, then relabels positive-bag
instances by the sign of their score, forcing the top-scoring instance
positive when a positive bag would otherwise be left without one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .model import bag_scores


@dataclass(frozen=True)
class MisvmConfig:
    C: float = 1.0
    max_outer_iters: int = 20
    inner_iters: int = 5000
    seed: int = 0

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("C must be > 0")
        if self.max_outer_iters < 1 or self.inner_iters < 1:
            raise ValueError("iteration budgets must be positive")


@dataclass(frozen=True)
class MisvmResult:
    weights: np.ndarray
    outer_iters: int
    converged: bool


class _InstanceMatrix:
    """All instances of a dataset stacked row-wise in CSR form."""

    def __init__(self, data: Dataset):
        indptr, indices, values = [0], [], []
        for b in data.bags:
            for x in b.instances:
                indices.append(x.indices)
                values.append(x.values)
                indptr.append(indptr[-1] + x.indices.size)
        self.indptr = np.asarray(indptr)
        self.indices = np.concatenate(indices)
        self.values = np.concatenate(values)
        self.n_rows = len(indptr) - 1
        self.dim = data.dim

    def row(self, i):
        a, b = self.indptr[i], self.indptr[i + 1]
        return self.indices[a:b], self.values[a:b]


def impute_labels(w: np.ndarray, data: Dataset) -> list[np.ndarray]:
    """Instance labels implied by ``w`` under the MIL constraints."""
    labels = []
    for b in data.bags:
        if b.label == 0:
            labels.append(np.zeros(len(b), dtype=np.int64))
            continue
        s = bag_scores(w, b)
        y = (s > 0).astype(np.int64)
        if not y.any():
            y[int(np.argmax(s))] = 1
        labels.append(y)
    return labels


def _fit_linear_svm(X: _InstanceMatrix, y: np.ndarray, C: float, iters: int, rng) -> np.ndarray:
    # Pegasos on (lam/2)||w||^2 + (1/N) sum hinge, with lam = 1/(C N)
    lam = 1.0 / (C * X.n_rows)
    radius = 1.0 / math.sqrt(lam)
    w = np.zeros(X.dim)
    picks = rng.integers(0, X.n_rows, size=iters)
    for t, i in enumerate(picks, start=1):
        eta = 1.0 / (lam * t)
        idx, val = X.row(i)
        margin = y[i] * float(w[idx] @ val)
        w *= 1.0 - eta * lam
        if margin < 1.0:
            w[idx] += eta * y[i] * val
        norm = np.linalg.norm(w)
        if norm > radius:
            w *= radius / norm
    return w


def train_misvm(data: Dataset, cfg: MisvmConfig = MisvmConfig()) -> MisvmResult:
    bag_labels = data.labels
    if bag_labels.min() == bag_labels.max():
        raise ValueError("miSVM needs both positive and negative bags")
    X = _InstanceMatrix(data)
    rng = np.random.default_rng(cfg.seed)
    labels = [np.full(len(b), b.label, dtype=np.int64) for b in data.bags]
    w = np.zeros(data.dim)
    for it in range(1, cfg.max_outer_iters + 1):
        y = 2.0 * np.concatenate(labels) - 1.0
        w = _fit_linear_svm(X, y, cfg.C, cfg.inner_iters, rng)
        new = impute_labels(w, data)
        if all(np.array_equal(a, b) for a, b in zip(new, labels)):
            return MisvmResult(w, it, True)
        labels = new
    return MisvmResult(w, cfg.max_outer_iters, False)
