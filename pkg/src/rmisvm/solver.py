"""
Projected SGD over uniformly sampled bags.

Each iteration draws one bag, steps against the single-bag gradient with
step size 1/(lam*t) and projects w back onto the L2 ball of radius
1/sqrt(lam). Exactly T iterations run; no averaging, no early stop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .data import Dataset
from .model import HyperParams
from .objective import objective, stochastic_grad


class NumericalError(ArithmeticError):
    pass


@dataclass
class SolverState:
    w: np.ndarray
    t: int = 1
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))
    trace: list[tuple[int, float]] = field(default_factory=list)


@dataclass(frozen=True)
class TrainReport:
    final_weights: np.ndarray
    iterations: int
    final_objective: float
    trace: tuple[tuple[int, float], ...] = ()


def step_size(t: int, hp: HyperParams) -> float:
    if hp.schedule == "t+1":
        return 1.0 / ((t + 1) * hp.lam)
    return 1.0 / (hp.lam * t)


def project(w: np.ndarray, lam: float) -> np.ndarray:
    radius = 1.0 / math.sqrt(lam)
    norm = float(np.linalg.norm(w))
    if norm <= radius:
        return w
    return w * (radius / norm)


def sgd_step(state: SolverState, bag, hp: HyperParams) -> SolverState:
    """Advance ``state`` by one projected update on ``bag`` (in place)."""
    eta = step_size(state.t, hp)
    w = state.w - eta * stochastic_grad(state.w, bag, hp)
    state.w = project(w, hp.lam)
    state.t += 1
    return state


def train(
    data: Dataset,
    hp: HyperParams,
    trace_every: int = 0,
    callback: Optional[Callable[[int, np.ndarray], None]] = None,
) -> TrainReport:
    """Run T projected SGD iterations from w = 0.

    ``callback(t, w)`` sees the weights after every completed iteration.
    ``trace_every > 0`` records the full objective every that many steps.
    """
    rng = np.random.default_rng(hp.seed)
    state = SolverState(w=np.zeros(data.dim), rng=rng)
    picks = rng.integers(0, data.n, size=hp.T)
    for k in picks:
        t = state.t
        sgd_step(state, data.bags[k], hp)
        if not np.all(np.isfinite(state.w)):
            raise NumericalError(f"non-finite weights at iteration {t}")
        if callback is not None:
            callback(t, state.w)
        if trace_every and t % trace_every == 0:
            state.trace.append((t, objective(state.w, data, hp).total))
    return TrainReport(
        final_weights=state.w,
        iterations=hp.T,
        final_objective=objective(state.w, data, hp).total,
        trace=tuple(state.trace),
    )
