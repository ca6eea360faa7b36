"""Projected online gradient descent with linear losses.

The learner keeps its decision inside an arbitrary convex set given only by a
projection operator.  Losses are linear, so the gradient vector *is* the loss
function and the best decision in hindsight can be computed exactly from the
summed gradients, which makes realized regret an exact quantity rather than a
bound.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np


@dataclass
class OgdState:
    """Mutable learner state; owned by a single run and updated sequentially.

    loss_history stores the gradient vector of each round's linear loss,
    i.e. l_t(lam) = <g_t, lam>.
    """

    current: np.ndarray
    eta: float
    t: int = 0
    cumulative_loss: float = 0.0
    loss_history: list = field(default_factory=list)
    iterate_sum: np.ndarray | None = None

    def __post_init__(self):
        self.current = np.asarray(self.current, dtype=float).copy()
        if self.eta <= 0 or not math.isfinite(self.eta):
            raise ValueError("step size must be positive and finite")
        if self.iterate_sum is None:
            self.iterate_sum = np.zeros_like(self.current)

    def average_iterate(self) -> np.ndarray:
        if self.t == 0:
            raise ValueError("no rounds played yet")
        return self.iterate_sum / self.t


def ogd_step(state: OgdState, loss_gradient: np.ndarray, project) -> OgdState:
    """Charge the current decision with the loss, then descend and project.

    The played decision is state.current *before* the update; the update is
    lam <- project(lam - eta * g).
    """
    g = np.asarray(loss_gradient, dtype=float)
    if g.shape != state.current.shape:
        raise ValueError("gradient dimension does not match the decision")
    if not np.all(np.isfinite(g)):
        raise ValueError("non-finite loss gradient")
    state.cumulative_loss += float(g @ state.current)
    state.iterate_sum = state.iterate_sum + state.current
    state.loss_history.append(g.copy())
    state.current = np.asarray(project(state.current - state.eta * g), dtype=float)
    state.t += 1
    return state


def realized_regret(state: OgdState, decision_set) -> float:
    """Cumulative loss minus the loss of the exact best fixed decision.

    decision_set must expose minimize_linear(g) returning the argmin of
    <g, .> over the set (LambdaSet and Box both do).
    """
    if state.t == 0:
        return 0.0
    g_sum = np.sum(state.loss_history, axis=0)
    best = np.asarray(decision_set.minimize_linear(g_sum), dtype=float)
    return state.cumulative_loss - float(g_sum @ best)


def tuned_step_size(diameter: float, gradient_bound: float, rounds: int) -> float:
    """Step size D / (G * sqrt(T)), the choice certifying regret <= D*G*sqrt(T)."""
    if diameter <= 0 or gradient_bound <= 0 or rounds <= 0:
        raise ValueError("diameter, gradient bound and rounds must be positive")
    return diameter / (gradient_bound * math.sqrt(rounds))
