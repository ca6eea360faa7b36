"""Benchmark environment generators.

Construction is deterministic given (name, params, seed); both generators
return the MDP together with ready-made target-set spec dicts (the same
format config files use).
"""
from __future__ import annotations

import numpy as np

from .mdp import VectorMDP


def random_mdp(num_states: int = 10, num_actions: int = 3, dim: int = 3,
               gamma: float = 0.9, seed: int = 0,
               concentration: float = 1.0) -> VectorMDP:
    """Dirichlet transition rows, measurements uniform in [-1, 1]^d,
    bound set to the exact max measurement norm."""
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.full(num_states, concentration), size=(num_states, num_actions))
    P = P / P.sum(axis=2, keepdims=True)
    beta = rng.dirichlet(np.full(num_states, concentration))
    beta = beta / beta.sum()
    Z = rng.uniform(-1.0, 1.0, size=(num_states, num_actions, dim))
    bound = float(np.max(np.linalg.norm(Z, axis=2)))
    return VectorMDP(beta, P, Z, gamma, bound)


def gridworld(width: int = 3, height: int = 3, gamma: float = 0.9,
              unsafe_cells=None, goal: tuple[int, int] | None = None,
              step_reward: float = -0.04, goal_reward: float = 1.0,
              slip: float = 0.0, seed: int = 0):
    """Grid MDP with measurement (step reward, unsafe indicator, cell one-hot).

    States are cells (row-major), 4 actions (up/down/left/right) with wall
    clipping; with probability `slip` the executed move is uniformly random.
    Measurements depend on the current cell only: d = 2 + width*height.

    Returns (mdp, info) where info holds the layout and target-set presets:
    "safety" bounds the long-term unsafe occupancy by a halfspace, and
    "visitation-box" caps every cell's discounted visitation.
    """
    if width < 1 or height < 1:
        raise ValueError("grid must be at least 1x1")
    S = width * height
    A = 4
    d = 2 + S
    if goal is None:
        goal = (height - 1, width - 1)
    if unsafe_cells is None:
        unsafe_cells = [(height // 2, width // 2)] if S > 1 else []
    unsafe_idx = {r * width + c for (r, c) in unsafe_cells}
    goal_idx = goal[0] * width + goal[1]
    if goal_idx in unsafe_idx:
        raise ValueError("goal cell cannot be unsafe")

    def move(s: int, a: int) -> int:
        r, c = divmod(s, width)
        dr, dc = [(-1, 0), (1, 0), (0, -1), (0, 1)][a]
        r2, c2 = min(max(r + dr, 0), height - 1), min(max(c + dc, 0), width - 1)
        return r2 * width + c2

    P = np.zeros((S, A, S))
    for s in range(S):
        for a in range(A):
            P[s, a, move(s, a)] += 1.0 - slip
            for b in range(A):
                P[s, a, move(s, b)] += slip / A
    Z = np.zeros((S, A, d))
    for s in range(S):
        reward = goal_reward if s == goal_idx else step_reward
        unsafe = 1.0 if s in unsafe_idx else 0.0
        Z[s, :, 0] = reward
        Z[s, :, 1] = unsafe
        Z[s, :, 2 + s] = 1.0
    bound = float(np.max(np.linalg.norm(Z, axis=2)))
    beta = np.zeros(S)
    beta[0] = 1.0
    mdp = VectorMDP(beta, P, Z, gamma, bound)

    horizon_mass = 1.0 / (1.0 - gamma)
    safety_threshold = 0.2 * horizon_mass
    # Halfspace "unsafe occupancy <= threshold" plus natural compactness bounds.
    normals = [np.eye(d)[1]]
    offsets = [safety_threshold]
    for j in range(d):
        e = np.eye(d)[j]
        normals.extend([e, -e])
        hi = goal_reward * horizon_mass if j == 0 else horizon_mass
        lo = step_reward * horizon_mass if j == 0 else 0.0
        offsets.extend([hi, -lo])
    visit_cap = 0.6 * horizon_mass
    info = {
        "width": width, "height": height, "goal": list(goal),
        "unsafe_cells": [list(c) for c in unsafe_cells],
        "presets": {
            "safety": {
                "kind": "polytope",
                "normals": [list(map(float, n)) for n in normals],
                "offsets": [float(o) for o in offsets],
            },
            "visitation-box": {
                "kind": "box",
                "lower": [step_reward * horizon_mass, 0.0] + [0.0] * S,
                "upper": [goal_reward * horizon_mass, safety_threshold] + [visit_cap] * S,
            },
        },
    }
    return mdp, info


GENERATORS = {"random_mdp": random_mdp, "gridworld": gridworld}


def generate(name: str, seed: int = 0, **params):
    """Dispatch by generator name; returns (mdp, info) for every generator."""
    if name not in GENERATORS:
        raise ValueError(f"unknown environment generator {name!r}")
    if name == "random_mdp":
        mdp = random_mdp(seed=seed, **params)
        bound_box = mdp.bound / (1.0 - mdp.gamma)
        info = {"presets": {"origin-ball": {"kind": "ball",
                                            "center": [0.0] * mdp.dim,
                                            "radius": round(bound_box / 4.0, 12)}}}
        return mdp, info
    return gridworld(seed=seed, **params)
