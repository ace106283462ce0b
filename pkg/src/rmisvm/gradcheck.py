"""Randomized finite-difference verification of the analytic gradients."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import Bag, Dataset, Instance
from .model import HyperParams, bag_scores
from . import objective as obj

# stay this far from the hinge corner and the pseudo-label flip
SMOOTH_GAP = 1e-3


@dataclass
class GradcheckResult:
    trials: int
    eps: float
    tol: float
    max_rel_error: float
    worst: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return math.isfinite(self.max_rel_error) and self.max_rel_error < self.tol


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / scale)


def is_smooth(w: np.ndarray, bag: Bag, hp: HyperParams) -> bool:
    s = bag_scores(w, bag)
    flip = math.log(hp.p0 / (1 - hp.p0))
    sgn = np.where(s > flip, 1.0, -1.0)
    log_q = obj.log_q_of(s)
    # keep P clear of the probability clamp
    clamp = math.log(1e-9)
    return bool(
        clamp < log_q < math.log1p(-1e-9)
        and np.all(np.abs(s) > SMOOTH_GAP)
        and np.all(np.abs(s - flip) > SMOOTH_GAP)
        and np.all(np.abs(sgn * s - hp.m0) > SMOOTH_GAP)
    )


def random_case(rng: np.random.Generator, max_dim: int = 20, max_m: int = 8):
    """Draw (w, bag, hp) away from the non-differentiable points."""
    while True:
        d = int(rng.integers(2, max_dim + 1))
        m = int(rng.integers(1, max_m + 1))
        hp = HyperParams(
            lam=float(10 ** rng.uniform(-3, 0)),
            beta=float(rng.uniform(0.1, 10)),
            m0=float(rng.uniform(0, 2)),
            p0=float(rng.uniform(0.2, 0.8)),
        )
        density = rng.uniform(0.3, 1.0)
        insts = []
        for _ in range(m):
            mask = rng.random(d) < density
            mask[rng.integers(d)] = True
            x = np.where(mask, rng.standard_normal(d), 0.0)
            insts.append(Instance.from_dense(x))
        bag = Bag("g", int(rng.integers(0, 2)), tuple(insts))
        w = rng.standard_normal(d) * rng.uniform(0.1, 1.5)
        if is_smooth(w, bag, hp):
            return w, bag, hp


def check_case(w, bag, hp, eps=1e-6, grads=None) -> dict[str, float]:
    """Relative errors of each analytic gradient against central differences."""
    g = {
        "bag_loss": obj.bag_loss_grad,
        "instance_loss": obj.instance_loss_grad,
        "stochastic": obj.stochastic_grad,
        "objective": obj.full_grad,
    }
    g.update(grads or {})
    Y = bag.label
    errs = {}
    fd = obj.finite_diff_grad(lambda v: obj.bag_loss_at(v, bag, Y), w, eps)
    errs["bag_loss"] = rel_error(g["bag_loss"](w, bag, Y), fd)
    worst = 0.0
    for x in bag.instances:
        fd = obj.finite_diff_grad(lambda v: obj.instance_loss(v, x, hp.p0, hp.m0), w, eps)
        worst = max(worst, rel_error(g["instance_loss"](w, x, hp.p0, hp.m0), fd))
    errs["instance_loss"] = worst
    fd = obj.finite_diff_grad(lambda v: obj.bag_objective(v, bag, hp), w, eps)
    errs["stochastic"] = rel_error(g["stochastic"](w, bag, hp), fd)
    # a two-bag dataset exercises the averaging in the full objective
    twin = Bag("h", 1 - Y, tuple(reversed(bag.instances)))
    data = Dataset((bag, twin), w.size)
    fd = obj.finite_diff_grad(lambda v: obj.objective(v, data, hp).total, w, eps)
    errs["objective"] = rel_error(g["objective"](w, data, hp), fd)
    return errs


def run_gradcheck(
    trials: int = 200,
    eps: float = 1e-6,
    seed: int = 0,
    tol: float = 1e-5,
    grads=None,
) -> GradcheckResult:
    rng = np.random.default_rng(seed)
    result = GradcheckResult(trials, eps, tol, 0.0)
    for trial in range(trials):
        w, bag, hp = random_case(rng)
        for name, err in check_case(w, bag, hp, eps, grads).items():
            if not err <= result.max_rel_error:
                result.max_rel_error = err
                result.worst = {
                    "trial": trial,
                    "gradient": name,
                    "dim": w.size,
                    "instances": len(bag),
                    "label": bag.label,
                    "lam": hp.lam,
                    "beta": hp.beta,
                    "m0": hp.m0,
                    "p0": hp.p0,
                }
    return result
