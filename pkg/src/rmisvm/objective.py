"""
Relaxed MIL objective and its gradients.

The full objective over n bags is

    (lam/2)||w||^2 + (beta/n) sum_i L_bag(i) + (1/n) sum_i (1/m_i) sum_j L_ins(ij)

with the Noisy-OR cross-entropy as bag loss and a self-labelled hinge as
instance loss. The pseudo-label sign(p_ij - p0) is -1 when p_ij == p0 and is
held constant under differentiation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit

from .data import Bag, Dataset, Instance
from .model import HyperParams, bag_scores, instance_score, log_one_minus_sigmoid, noisy_or

EPS_P = 1e-12


@dataclass(frozen=True)
class ObjectiveBreakdown:
    total: float
    reg_term: float
    bag_term: float
    ins_term: float


def log_q_of(scores: np.ndarray) -> float:
    """log(1 - P) for the Noisy-OR over sigmoid(scores)."""
    return float(np.sum(log_one_minus_sigmoid(scores)))


def pseudo_sign(p, p0):
    """+1 where p > p0, otherwise -1 (including p == p0)."""
    return np.where(np.asarray(p) > p0, 1.0, -1.0)


def bag_loss(P: float, Y: int) -> float:
    P = min(max(P, EPS_P), 1.0 - EPS_P)
    return -(Y * np.log(P) + (1 - Y) * np.log1p(-P))


def _bag_loss_log_q(log_q: float, Y: int) -> float:
    # same clamp as bag_loss, but evaluated from log(1 - P) to keep precision
    lo, hi = np.log(EPS_P), np.log1p(-EPS_P)
    log_q = min(max(log_q, lo), hi)
    if Y == 0:
        return -log_q
    if log_q < -np.log(2.0):
        return -np.log1p(-np.exp(log_q))
    return -np.log(-np.expm1(log_q))


def bag_loss_at(w: np.ndarray, bag: Bag, Y: int | None = None) -> float:
    """L_bag of ``bag`` under weights ``w``."""
    Y = bag.label if Y is None else Y
    return _bag_loss_log_q(log_q_of(bag_scores(w, bag)), Y)


def instance_loss(w: np.ndarray, x: Instance, p0: float, m0: float) -> float:
    s = instance_score(w, x)
    sgn = float(pseudo_sign(expit(s), p0))
    return max(0.0, m0 - sgn * s)


def _scatter(bag: Bag, coef: np.ndarray, dim: int) -> np.ndarray:
    """sum_j coef[j] * x_j as a dense vector."""
    rows, cols, vals = bag.coo
    return np.bincount(cols, weights=coef[rows] * vals, minlength=dim)


def _bag_coef(s: np.ndarray, Y: int) -> np.ndarray:
    # coefficient of x_j in d L_bag / dw:  -p_j (Y - P) / P
    p = expit(s)
    P, Q = noisy_or(s)
    if Y == 0:
        # (0 - P) / P == -1 exactly
        return p
    # (1 - P) / P with 1 - P taken from log space
    return -p * (Q / max(P, EPS_P))


def _ins_coef(s: np.ndarray, p0: float, m0: float) -> np.ndarray:
    sgn = pseudo_sign(expit(s), p0)
    active = sgn * s < m0
    return -np.where(active, sgn, 0.0)


def bag_loss_grad(w: np.ndarray, bag: Bag, Y: int | None = None) -> np.ndarray:
    Y = bag.label if Y is None else Y
    return _scatter(bag, _bag_coef(bag_scores(w, bag), Y), w.shape[0])


def instance_loss_grad(w: np.ndarray, x: Instance, p0: float, m0: float) -> np.ndarray:
    s = instance_score(w, x)
    c = float(_ins_coef(np.array([s]), p0, m0)[0])
    g = np.zeros(w.shape[0])
    if c:
        g[x.indices] = c * x.values
    return g


def stochastic_grad(w: np.ndarray, bag: Bag, hp: HyperParams) -> np.ndarray:
    """Gradient of lam/2 ||w||^2 + beta L_bag + (1/m) sum_j L_ins on one bag."""
    s = bag_scores(w, bag)
    coef = hp.beta * _bag_coef(s, bag.label) + _ins_coef(s, hp.p0, hp.m0) / len(bag)
    return hp.lam * w + _scatter(bag, coef, w.shape[0])


def bag_objective(w: np.ndarray, bag: Bag, hp: HyperParams) -> float:
    """Single-bag surrogate f(w; X_k) whose gradient is ``stochastic_grad``."""
    s = bag_scores(w, bag)
    sgn = pseudo_sign(expit(s), hp.p0)
    ins = np.maximum(0.0, hp.m0 - sgn * s)
    return (
        0.5 * hp.lam * float(w @ w)
        + hp.beta * _bag_loss_log_q(log_q_of(s), bag.label)
        + float(np.sum(ins)) / len(bag)
    )


def objective(w: np.ndarray, data: Dataset, hp: HyperParams) -> ObjectiveBreakdown:
    bag_sum = 0.0
    ins_sum = 0.0
    for bag in data.bags:
        s = bag_scores(w, bag)
        bag_sum += _bag_loss_log_q(log_q_of(s), bag.label)
        sgn = pseudo_sign(expit(s), hp.p0)
        ins_sum += float(np.sum(np.maximum(0.0, hp.m0 - sgn * s))) / len(bag)
    reg = 0.5 * hp.lam * float(w @ w)
    bag_term = hp.beta * bag_sum / data.n
    ins_term = ins_sum / data.n
    return ObjectiveBreakdown(reg + bag_term + ins_term, reg, bag_term, ins_term)


def full_grad(w: np.ndarray, data: Dataset, hp: HyperParams) -> np.ndarray:
    """Gradient of ``objective``: the mean of the per-bag stochastic gradients."""
    g = np.zeros(w.shape[0])
    for bag in data.bags:
        g += stochastic_grad(w, bag, hp)
    return g / data.n


def finite_diff_grad(f: Callable[[np.ndarray], float], w: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    w = np.array(w, dtype=np.float64)
    g = np.empty_like(w)
    for i in range(w.size):
        old = w[i]
        w[i] = old + eps
        fp = f(w)
        w[i] = old - eps
        fm = f(w)
        w[i] = old
        g[i] = (fp - fm) / (2 * eps)
    return g
