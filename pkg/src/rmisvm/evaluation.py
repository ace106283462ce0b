"""Repeated stratified k-fold cross-validation and top-k detection curves."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .data import Dataset, GroundTruth
from .misvm import MisvmConfig, train_misvm
from .model import HyperParams, bag_prob, predict_bag, select_top_instances
from .solver import train

Trainer = Callable[[Dataset, int], np.ndarray]


@dataclass(frozen=True)
class CvReport:
    repeats: int
    folds: int
    per_run_accuracy: tuple[float, ...]
    mean: float
    std: float
    trainer: str = "rmi"

    def to_text(self) -> str:
        lines = [
            f"trainer: {self.trainer}",
            f"protocol: {self.repeats} x {self.folds}-fold cross-validation",
            f"accuracy: {100 * self.mean:.2f} +/- {100 * self.std:.2f} %",
        ]
        lines += [f"  repeat {i}: {100 * a:.2f} %" for i, a in enumerate(self.per_run_accuracy, 1)]
        return "\n".join(lines) + "\n"

    def to_kv(self) -> str:
        rows = [
            f"trainer={self.trainer}",
            f"repeats={self.repeats}",
            f"folds={self.folds}",
            f"mean={self.mean!r}",
            f"std={self.std!r}",
        ]
        rows += [f"run{i}={a!r}" for i, a in enumerate(self.per_run_accuracy, 1)]
        return "\n".join(rows) + "\n"


@dataclass(frozen=True)
class DetectionCurve:
    k_values: tuple[int, ...]
    rates: tuple[float, ...]

    def to_text(self) -> str:
        rows = ["k\tdetection_rate"]
        rows += [f"{k}\t{r:.4f}" for k, r in zip(self.k_values, self.rates)]
        return "\n".join(rows) + "\n"

    def to_kv(self) -> str:
        return "".join(f"{k}\t{r!r}\n" for k, r in zip(self.k_values, self.rates))


def accuracy(predicted: Sequence[int], truth: Sequence[int]) -> float:
    predicted, truth = np.asarray(predicted), np.asarray(truth)
    if predicted.shape != truth.shape:
        raise ValueError("prediction and truth lengths differ")
    if predicted.size == 0:
        raise ValueError("cannot score an empty prediction")
    return float(np.mean(predicted == truth))


def predict_bags(w: np.ndarray, data: Dataset) -> np.ndarray:
    return np.array([predict_bag(bag_prob(w, b)) for b in data.bags], dtype=np.int64)


def _derive_seed(*keys: int) -> int:
    return int(np.random.SeedSequence([k & 0xFFFFFFFF for k in keys]).generate_state(1)[0])


def stratified_folds(data: Dataset, k: int, seed: int, repeat: int = 0) -> list[np.ndarray]:
    """Partition bag positions into k label-stratified folds.

    Bags are first put in canonical (bag id) order, so the split does not
    depend on file order.
    """
    canon = sorted(range(data.n), key=lambda i: data.bags[i].id)
    labels = data.labels
    rng = np.random.default_rng(_derive_seed(seed, repeat))
    assign = {}
    offset = 0
    for cls in (1, 0):
        members = np.array([i for i in canon if labels[i] == cls], dtype=np.int64)
        members = members[rng.permutation(members.size)]
        for pos, i in enumerate(members):
            assign[int(i)] = (offset + pos) % k
        # continue dealing where the previous class stopped to balance fold sizes
        offset = (offset + members.size) % k
    folds = [[] for _ in range(k)]
    for i in canon:
        folds[assign[i]].append(i)
    return [np.array(sorted(f, key=lambda i: data.bags[i].id), dtype=np.int64) for f in folds]


def _resolve_trainer(trainer, hp: HyperParams, misvm_cfg: MisvmConfig | None) -> tuple[str, Trainer]:
    if callable(trainer):
        return getattr(trainer, "__name__", "custom"), trainer
    if trainer == "rmi":
        return "rmi", lambda d, s: train(d, dataclasses.replace(hp, seed=s)).final_weights
    if trainer == "misvm":
        cfg = misvm_cfg or MisvmConfig()
        return "misvm", lambda d, s: train_misvm(d, dataclasses.replace(cfg, seed=s)).weights
    raise ValueError(f"unknown trainer {trainer!r}")


def kfold_cv(
    data: Dataset,
    hp: HyperParams = HyperParams(),
    k: int = 10,
    repeats: int = 10,
    trainer: Union[str, Trainer] = "rmi",
    seed: int = 0,
    misvm_cfg: MisvmConfig | None = None,
) -> CvReport:
    """Repeated stratified k-fold bag-level accuracy.

    Each repeat pools the held-out predictions of its k folds into one
    accuracy; ``std`` is the population deviation across repeats. Every fold
    trains with its own seed derived from (seed, repeat, fold).
    """
    if k < 2:
        raise ValueError("need at least 2 folds")
    if repeats < 1:
        raise ValueError("need at least 1 repeat")
    # canonical order makes the report independent of file order
    data = Dataset(tuple(sorted(data.bags, key=lambda b: b.id)), data.dim)
    labels = data.labels
    for cls in (0, 1):
        if np.sum(labels == cls) < k:
            raise ValueError(f"class {cls} has fewer bags than folds ({k})")
    name, fit = _resolve_trainer(trainer, hp, misvm_cfg)

    per_run = []
    for r in range(repeats):
        folds = stratified_folds(data, k, seed, r)
        correct = 0
        for f, test_idx in enumerate(folds):
            test = set(test_idx.tolist())
            train_idx = [i for i in range(data.n) if i not in test]
            w = fit(data.subset(train_idx), _derive_seed(seed, r, f))
            pred = predict_bags(w, data.subset(test_idx))
            correct += int(np.sum(pred == labels[test_idx]))
        per_run.append(correct / data.n)
    runs = np.array(per_run)
    return CvReport(repeats, k, tuple(per_run), float(runs.mean()), float(runs.std()), name)


def detection_rate_curve(
    w: np.ndarray, data: Dataset, gt: GroundTruth, k_values: Sequence[int]
) -> DetectionCurve:
    """Share of positive bags whose top-k instances include a true positive."""
    gt.check(data)
    ks = tuple(sorted({int(k) for k in k_values}))
    if not ks or ks[0] < 1:
        raise ValueError("k values must be positive integers")
    # rank of the first true positive in each positive bag
    first_hit = []
    for b, y in zip(data.bags, gt.labels):
        if b.label != 1:
            continue
        order = select_top_instances(w, b, len(b))
        first_hit.append(next(r for r, j in enumerate(order, 1) if y[j]))
    if not first_hit:
        raise ValueError("no positive bags to evaluate")
    hits = np.array(first_hit)
    rates = tuple(float(np.mean(hits <= k)) for k in ks)
    return DetectionCurve(ks, rates)


def top1_recovery(w: np.ndarray, data: Dataset, gt: GroundTruth) -> float:
    return detection_rate_curve(w, data, gt, [1]).rates[0]
