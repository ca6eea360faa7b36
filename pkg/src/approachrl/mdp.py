"""Tabular MDPs whose per-step feedback is a bounded measurement vector.

A policy induces a discounted occupancy d solving d = beta + gamma * P_pi^T d,
and the long-term measurement of the policy is the occupancy-weighted mean
measurement.  Everything here is exact linear algebra; sampling helpers live
at the bottom.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Switch from a dense solve to fixed-point iteration above this state count.
DENSE_SOLVE_MAX_STATES = 500
# Fixed-point iteration is run until the occupancy error is below this.
FIXED_POINT_TOL = 1e-12

ROW_SUM_TOL = 1e-12
NOISE_MEAN_TOL = 1e-9


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(np.asarray(arr, dtype=float))
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class FiniteMeasurementNoise:
    """Finite-support measurement distribution per (s, a).

    support has shape (S, A, K, d) and probs has shape (S, A, K); the mean
    over the support must reproduce the MDP's measurement_mean.
    """

    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "support", _freeze(self.support))
        object.__setattr__(self, "probs", _freeze(self.probs))
        if self.support.ndim != 4 or self.probs.ndim != 3:
            raise ValueError("noise support must be (S,A,K,d), probs (S,A,K)")
        if self.support.shape[:3] != self.probs.shape:
            raise ValueError("noise support/probs shapes disagree")
        if np.any(self.probs < -ROW_SUM_TOL):
            raise ValueError("noise probabilities must be nonnegative")
        sums = self.probs.sum(axis=2)
        if np.max(np.abs(sums - 1.0)) > ROW_SUM_TOL:
            raise ValueError("noise probabilities must sum to 1 per (s,a)")

    def mean(self) -> np.ndarray:
        return np.einsum("sak,sakd->sad", self.probs, self.support)


@dataclass(frozen=True)
class VectorMDP:
    """MDP with vector measurements: (initial_dist, transition, measurement_mean, gamma, bound).

    transition has shape (S, A, S); measurement_mean has shape (S, A, d).
    bound is a norm cap: every realizable per-step measurement has
    ||z|| <= bound, so any long-term measurement has norm <= bound/(1-gamma).
    """

    initial_dist: np.ndarray
    transition: np.ndarray
    measurement_mean: np.ndarray
    gamma: float
    bound: float
    measurement_noise: FiniteMeasurementNoise | None = None

    def __post_init__(self):
        object.__setattr__(self, "initial_dist", _freeze(self.initial_dist))
        object.__setattr__(self, "transition", _freeze(self.transition))
        object.__setattr__(self, "measurement_mean", _freeze(self.measurement_mean))
        beta, P, Z = self.initial_dist, self.transition, self.measurement_mean
        if beta.ndim != 1 or P.ndim != 3 or Z.ndim != 3:
            raise ValueError("initial_dist must be (S,), transition (S,A,S), measurement_mean (S,A,d)")
        S = beta.shape[0]
        if P.shape[0] != S or P.shape[2] != S or Z.shape[0] != S or Z.shape[1] != P.shape[1]:
            raise ValueError("shape mismatch between initial_dist/transition/measurement_mean")
        if np.any(beta < -ROW_SUM_TOL) or abs(beta.sum() - 1.0) > ROW_SUM_TOL:
            raise ValueError("initial_dist must be a probability vector (1e-12 tolerance)")
        if np.any(P < -ROW_SUM_TOL) or np.max(np.abs(P.sum(axis=2) - 1.0)) > ROW_SUM_TOL:
            raise ValueError("transition rows must be probability vectors (1e-12 tolerance)")
        if not (0.0 < self.gamma < 1.0):
            raise ValueError("gamma must lie strictly inside (0, 1)")
        if self.bound <= 0 or not math.isfinite(self.bound):
            raise ValueError("bound must be positive and finite")
        norms = np.linalg.norm(Z, axis=2)
        if np.max(norms) > self.bound * (1 + 1e-12) + 1e-12:
            raise ValueError("||measurement_mean[s,a]|| must not exceed bound")
        if self.measurement_noise is not None:
            noise = self.measurement_noise
            if noise.support.shape[:2] != Z.shape[:2] or noise.support.shape[3] != Z.shape[2]:
                raise ValueError("measurement_noise shape does not match the MDP")
            if np.max(np.abs(noise.mean() - Z)) > NOISE_MEAN_TOL:
                raise ValueError("measurement_noise mean must equal measurement_mean")
            sup_norms = np.linalg.norm(noise.support, axis=3)
            if np.max(sup_norms) > self.bound * (1 + 1e-12) + 1e-12:
                raise ValueError("noise support must respect the measurement bound")

    @property
    def num_states(self) -> int:
        return self.initial_dist.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def dim(self) -> int:
        return self.measurement_mean.shape[2]


@dataclass(frozen=True)
class StationaryPolicy:
    """Stationary stochastic policy; action_probs has shape (S, A)."""

    action_probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "action_probs", _freeze(self.action_probs))
        pi = self.action_probs
        if pi.ndim != 2:
            raise ValueError("action_probs must have shape (S, A)")
        if np.any(pi < -ROW_SUM_TOL) or np.max(np.abs(pi.sum(axis=1) - 1.0)) > ROW_SUM_TOL:
            raise ValueError("policy rows must be probability vectors")

    @classmethod
    def deterministic(cls, actions, num_actions: int) -> "StationaryPolicy":
        actions = np.asarray(actions, dtype=int)
        pi = np.zeros((actions.shape[0], num_actions))
        pi[np.arange(actions.shape[0]), actions] = 1.0
        return cls(pi)

    @classmethod
    def uniform(cls, num_states: int, num_actions: int) -> "StationaryPolicy":
        return cls(np.full((num_states, num_actions), 1.0 / num_actions))

    def key(self) -> bytes:
        """Hashable identity of the action table (used for mixture dedup)."""
        return self.action_probs.tobytes()


@dataclass(frozen=True)
class MixedPolicy:
    """Finite convex mixture over stationary policies: execution draws one
    component at episode start and follows it forever."""

    policies: tuple
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "policies", tuple(self.policies))
        object.__setattr__(self, "weights", _freeze(self.weights))
        if len(self.policies) == 0:
            raise ValueError("mixture needs at least one component")
        w = self.weights
        if w.shape != (len(self.policies),):
            raise ValueError("one weight per component required")
        if np.any(w < -ROW_SUM_TOL) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("mixture weights must be a probability vector")

    @classmethod
    def from_sequence(cls, policies) -> "MixedPolicy":
        """Uniform mixture over a sequence, merging identical action tables."""
        merged: dict[bytes, list] = {}
        for pi in policies:
            slot = merged.setdefault(pi.key(), [pi, 0])
            slot[1] += 1
        total = sum(count for _, count in merged.values())
        comps = [pi for pi, _ in merged.values()]
        weights = np.array([count / total for _, count in merged.values()])
        return cls(tuple(comps), weights)


@dataclass(frozen=True)
class Trajectory:
    """One sampled rollout: visited states, actions taken, realized measurements."""

    states: np.ndarray
    actions: np.ndarray
    measurements: np.ndarray
    gamma: float

    @property
    def horizon(self) -> int:
        return self.states.shape[0]

    def discounted_sum(self) -> np.ndarray:
        disc = self.gamma ** np.arange(self.horizon)
        return disc @ self.measurements


def policy_transition(mdp: VectorMDP, policy: StationaryPolicy) -> np.ndarray:
    """State-to-state transition matrix P_pi[s, s'] under the policy."""
    return np.einsum("sa,sat->st", policy.action_probs, mdp.transition)


def occupancy(mdp: VectorMDP, policy: StationaryPolicy) -> np.ndarray:
    """Discounted state occupancy d = beta + gamma * P_pi^T d (total mass 1/(1-gamma))."""
    P_pi = policy_transition(mdp, policy)
    S = mdp.num_states
    if S <= DENSE_SOLVE_MAX_STATES:
        return np.linalg.solve(np.eye(S) - mdp.gamma * P_pi.T, mdp.initial_dist)
    # Large state spaces: geometric fixed point.  The iteration contracts in
    # l1 with factor gamma, so stop once the certified error is below tol.
    d = mdp.initial_dist.copy()
    gamma = mdp.gamma
    stop = FIXED_POINT_TOL * (1.0 - gamma) / gamma
    for _ in range(100000):
        d_next = mdp.initial_dist + gamma * (P_pi.T @ d)
        if np.abs(d_next - d).sum() <= stop:
            return d_next
        d = d_next
    raise RuntimeError("occupancy fixed point failed to reach tolerance")


def long_term_measurement(mdp: VectorMDP, policy: StationaryPolicy) -> np.ndarray:
    """Expected discounted measurement sum of the policy (exact)."""
    d = occupancy(mdp, policy)
    z_pi = np.einsum("sa,sad->sd", policy.action_probs, mdp.measurement_mean)
    return d @ z_pi


def scalar_long_term_reward(mdp: VectorMDP, policy: StationaryPolicy, rewards: np.ndarray) -> float:
    """Exact discounted return for a scalar reward table of shape (S, A)."""
    d = occupancy(mdp, policy)
    r_pi = np.einsum("sa,sa->s", policy.action_probs, rewards)
    return float(d @ r_pi)


def mixed_measurement(mdp: VectorMDP, mixed: MixedPolicy) -> np.ndarray:
    """Long-term measurement of a mixture (linear in the weights)."""
    parts = np.stack([long_term_measurement(mdp, pi) for pi in mixed.policies])
    return mixed.weights @ parts


def default_horizon(mdp: VectorMDP, tol: float = 1e-3) -> int:
    """Smallest H with gamma^H * bound/(1-gamma) <= tol (>= 1)."""
    tail0 = mdp.bound / (1.0 - mdp.gamma)
    if tail0 <= tol:
        return 1
    return max(1, math.ceil(math.log(tol / tail0) / math.log(mdp.gamma)))


def _sample_measurement(mdp: VectorMDP, s: int, a: int, rng: np.random.Generator) -> np.ndarray:
    if mdp.measurement_noise is None:
        return mdp.measurement_mean[s, a]
    noise = mdp.measurement_noise
    k = rng.choice(noise.probs.shape[2], p=noise.probs[s, a])
    return noise.support[s, a, k]


def sample_trajectory(mdp: VectorMDP, policy: StationaryPolicy, horizon: int,
                      rng: np.random.Generator) -> Trajectory:
    """Roll out the policy for `horizon` steps from the initial distribution."""
    states = np.empty(horizon, dtype=int)
    actions = np.empty(horizon, dtype=int)
    zs = np.empty((horizon, mdp.dim))
    s = rng.choice(mdp.num_states, p=mdp.initial_dist)
    for i in range(horizon):
        a = rng.choice(mdp.num_actions, p=policy.action_probs[s])
        states[i], actions[i] = s, a
        zs[i] = _sample_measurement(mdp, s, a, rng)
        s = rng.choice(mdp.num_states, p=mdp.transition[s, a])
    return Trajectory(states, actions, zs, mdp.gamma)


def _categorical_rows(prob_rows: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row of a (m, K) probability matrix."""
    cum = np.cumsum(prob_rows, axis=1)
    u = rng.random(prob_rows.shape[0])
    return np.minimum((u[:, None] > cum).sum(axis=1), prob_rows.shape[1] - 1)


def sample_discounted_sums(mdp: VectorMDP, policy: StationaryPolicy, num_rollouts: int,
                           horizon: int, rng: np.random.Generator) -> np.ndarray:
    """Vectorized batch of truncated discounted measurement sums, shape (m, d)."""
    m = num_rollouts
    totals = np.zeros((m, mdp.dim))
    states = _categorical_rows(np.tile(mdp.initial_dist, (m, 1)), rng)
    disc = 1.0
    for _ in range(horizon):
        actions = _categorical_rows(policy.action_probs[states], rng)
        if mdp.measurement_noise is None:
            z = mdp.measurement_mean[states, actions]
        else:
            noise = mdp.measurement_noise
            ks = _categorical_rows(noise.probs[states, actions], rng)
            z = noise.support[states, actions, ks]
        totals += disc * z
        states = _categorical_rows(mdp.transition[states, actions], rng)
        disc *= mdp.gamma
    return totals


# ---------------------------------------------------------------------------
# Plain-text description files and CSV export.
# ---------------------------------------------------------------------------

_SECTIONS = ("states", "actions", "gamma", "bound", "beta", "P", "Z")


def save_mdp(mdp: VectorMDP, path) -> None:
    """Write the MDP in the sectioned plain-text format (see load_mdp)."""
    lines = []
    lines.append("[states]")
    lines.append(str(mdp.num_states))
    lines.append("[actions]")
    lines.append(str(mdp.num_actions))
    lines.append("[gamma]")
    lines.append(f"{mdp.gamma:.17g}")
    lines.append("[bound]")
    lines.append(f"{mdp.bound:.17g}")
    lines.append("[beta]")
    lines.append(" ".join(f"{v:.17g}" for v in mdp.initial_dist))
    lines.append("[P]")
    for s in range(mdp.num_states):
        for a in range(mdp.num_actions):
            row = " ".join(f"{v:.17g}" for v in mdp.transition[s, a])
            lines.append(f"{s} {a} {row}")
    lines.append("[Z]")
    for s in range(mdp.num_states):
        for a in range(mdp.num_actions):
            row = " ".join(f"{v:.17g}" for v in mdp.measurement_mean[s, a])
            lines.append(f"{s} {a} {row}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_mdp(path) -> VectorMDP:
    """Parse the sectioned plain-text MDP format.

    Sections: [states], [actions], [gamma], [bound], [beta], [P], [Z].
    [P]/[Z] rows are "s a v0 v1 ...".  '#' starts a comment.
    """
    sections: dict[str, list[str]] = {}
    current = None
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1].strip()
                if current not in _SECTIONS:
                    raise ValueError(f"unknown section [{current}]")
                sections[current] = []
                continue
            if current is None:
                raise ValueError("content before any section header")
            sections[current].append(line)
    missing = [s for s in _SECTIONS if s not in sections]
    if missing:
        raise ValueError(f"missing sections: {missing}")
    S = int(sections["states"][0])
    A = int(sections["actions"][0])
    gamma = float(sections["gamma"][0])
    bound = float(sections["bound"][0])
    beta = np.array([float(v) for v in " ".join(sections["beta"]).split()])

    def parse_table(rows, width=None):
        table = {}
        for line in rows:
            parts = line.split()
            s, a = int(parts[0]), int(parts[1])
            vals = np.array([float(v) for v in parts[2:]])
            if not (0 <= s < S and 0 <= a < A):
                raise ValueError(f"row index ({s},{a}) out of range")
            table[(s, a)] = vals
        if len(table) != S * A:
            raise ValueError("every (state, action) pair needs exactly one row")
        widths = {v.shape[0] for v in table.values()}
        if len(widths) != 1 or (width is not None and widths != {width}):
            raise ValueError("inconsistent row widths")
        w = widths.pop()
        out = np.empty((S, A, w))
        for (s, a), vals in table.items():
            out[s, a] = vals
        return out

    P = parse_table(sections["P"], width=S)
    Z = parse_table(sections["Z"])
    return VectorMDP(beta, P, Z, gamma, bound)


def write_measurement_csv(path, vectors) -> None:
    """CSV export of long-term measurement vectors, one column per dimension,
    17 significant digits."""
    arr = np.atleast_2d(np.asarray(vectors, dtype=float))
    header = ",".join(f"z_{j}" for j in range(arr.shape[1]))
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in arr:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
