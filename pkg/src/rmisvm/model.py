"""Forward pass of the relaxed MIL model: instance and Noisy-OR bag probabilities."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .data import Bag, Instance

MODEL_HEADER = "#rmisvm-model"

SCHEDULES = ("t", "t+1")


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class HyperParams:
    """Training configuration.

    ``schedule`` picks the step size: ``"t"`` gives 1/(lambda*t), ``"t+1"``
    gives 1/(lambda*(t+1)).
    """

    lam: float = 0.01
    beta: float = 5.0
    m0: float = 1.0
    p0: float = 0.5
    T: int = 2000
    seed: int = 0
    schedule: str = "t"

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be > 0, got {self.lam}")
        if not self.beta > 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if not self.m0 >= 0:
            raise ValueError(f"m0 must be >= 0, got {self.m0}")
        if not 0 < self.p0 < 1:
            raise ValueError(f"p0 must lie in (0, 1), got {self.p0}")
        if int(self.T) != self.T or self.T < 1:
            raise ValueError(f"T must be a positive integer, got {self.T}")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}, got {self.schedule!r}")


def _check_dim(w: np.ndarray, max_index: int) -> None:
    if max_index >= w.shape[0]:
        raise DimensionMismatch(
            f"feature index {max_index} out of range for weights of length {w.shape[0]}"
        )


def log_one_minus_sigmoid(s: np.ndarray) -> np.ndarray:
    """log(1 - sigmoid(s)), i.e. -softplus(s), stable for large |s|."""
    return -np.logaddexp(0.0, s)


def instance_score(w: np.ndarray, x: Instance) -> float:
    _check_dim(w, x.max_index)
    return x.dot(w)


def instance_prob(w: np.ndarray, x: Instance) -> float:
    return float(expit(instance_score(w, x)))


def bag_scores(w: np.ndarray, bag: Bag) -> np.ndarray:
    """w^T x_ij for every instance of the bag, in instance order."""
    _check_dim(w, bag.max_index)
    rows, cols, vals = bag.coo
    return np.bincount(rows, weights=w[cols] * vals, minlength=len(bag))


def noisy_or(scores: np.ndarray) -> tuple[float, float]:
    """Return (P, 1 - P) for the Noisy-OR over sigmoid(scores), in log space."""
    log_q = float(np.sum(log_one_minus_sigmoid(scores)))
    return float(-np.expm1(log_q)), float(np.exp(log_q))


def bag_prob(w: np.ndarray, bag: Bag) -> float:
    return noisy_or(bag_scores(w, bag))[0]


def predict_instance(p: float, p0: float = 0.5) -> int:
    return int(p >= p0)


def predict_bag(P: float) -> int:
    return int(P >= 0.5)


def select_top_instances(w: np.ndarray, bag: Bag, k: int) -> list[int]:
    """Positions of the k highest-scoring instances, best first.

    Ties go to the earlier position.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    s = bag_scores(w, bag)
    # lexsort: last key is primary
    order = np.lexsort((np.arange(s.size), -s))
    return order[:k].tolist()


# ---------------------------------------------------------------------------
# model file
# ---------------------------------------------------------------------------


def format_model(w: np.ndarray) -> str:
    w = np.asarray(w, dtype=np.float64)
    lines = [f"{MODEL_HEADER} dim={w.size}"]
    lines.extend(f"{v:.17g}" for v in w)
    return "\n".join(lines) + "\n"


def parse_model(text: str) -> np.ndarray:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith(MODEL_HEADER):
        raise ValueError("not an rmisvm model file")
    fields = dict(f.split("=", 1) for f in lines[0].split()[1:] if "=" in f)
    try:
        dim = int(fields["dim"])
    except (KeyError, ValueError):
        raise ValueError("model header lacks a valid dim=<d>") from None
    w = np.array([float(v) for v in lines[1:]], dtype=np.float64)
    if w.size != dim:
        raise ValueError(f"model declares dim={dim} but holds {w.size} weights")
    if not np.all(np.isfinite(w)):
        raise ValueError("model contains non-finite weights")
    return w


def save_model(w: np.ndarray, path: str | Path) -> None:
    Path(path).write_text(format_model(w), encoding="utf-8")


def load_model(path: str | Path) -> np.ndarray:
    return parse_model(Path(path).read_text(encoding="utf-8"))
