"""RL oracles for scalarized rewards, plus the policy cache.

The game driver repeatedly asks for (near-)best responses to the scalar
reward r(s,a) = -<lam, z(s,a)>.  Exact mode answers with value iteration and
linear solves; sampled mode answers with tabular Q-learning and truncated
rollouts.  The cache remembers every returned policy together with its
estimated long-term measurement so later rounds (and later binary-search
thresholds) can be served without touching the oracle.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .mdp import (StationaryPolicy, VectorMDP, default_horizon, long_term_measurement,
                  occupancy, policy_transition, sample_discounted_sums)

ESTIMATE_CHUNK = 1024  # rollouts per seed chunk, independent of worker count


@dataclass
class OracleConfig:
    """Knobs for both oracle modes.

    eps0/eps1 are *declared* best-response / estimation error bounds used in
    thresholds and reported guarantees.  Exact mode treats them as zero up to
    solver tolerance and derives its own eps0 from vi_tolerance.
    """

    mode: str = "exact"  # "exact" | "sampled"
    eps0: float = 0.0
    eps1: float = 0.0
    vi_tolerance: float = 1e-10
    trailing_n: int = 20
    trailing_eps: float = 0.05
    max_episodes: int = 2000
    est_rollouts: int = 1000
    horizon: int | None = None
    explore_eps: float = 0.1

    def __post_init__(self):
        if self.mode not in ("exact", "sampled"):
            raise ValueError("mode must be 'exact' or 'sampled'")
        if self.eps0 < 0 or self.eps1 < 0:
            raise ValueError("eps0/eps1 must be nonnegative")
        if self.vi_tolerance <= 0:
            raise ValueError("vi_tolerance must be positive")
        if self.mode == "sampled" and self.trailing_n < 1:
            raise ValueError("sampled mode needs trailing_n >= 1")
        if self.trailing_eps < 0 or self.max_episodes < 1 or self.est_rollouts < 1:
            raise ValueError("bad sampled-mode parameters")


@dataclass
class OracleResponse:
    policy: StationaryPolicy
    value: float                       # achieved long-term scalar reward (exact or trailing mean)
    above_threshold: bool = True
    z_hat: np.ndarray | None = None    # trailing measurement estimate, when the oracle has one
    episodes: int = 0


def vi_suboptimality(mdp: VectorMDP, cfg: OracleConfig) -> float:
    """Best-response slack certified by the value-iteration stopping rule."""
    return 2.0 * mdp.gamma * cfg.vi_tolerance / (1.0 - mdp.gamma)


def effective_epsilons(mdp: VectorMDP, cfg: OracleConfig) -> tuple[float, float]:
    """(eps0, eps1) actually used in thresholds for this oracle mode."""
    if cfg.mode == "exact":
        return max(cfg.eps0, vi_suboptimality(mdp, cfg)), cfg.eps1
    return max(cfg.eps0, cfg.trailing_eps), cfg.eps1


def scalar_rewards(mdp: VectorMDP, lam: np.ndarray) -> np.ndarray:
    """Reward table r(s,a) = -<lam, z(s,a)>, shape (S, A)."""
    return -np.einsum("sad,d->sa", mdp.measurement_mean, np.asarray(lam, dtype=float))


def evaluate_policy(mdp: VectorMDP, policy: StationaryPolicy, rewards: np.ndarray) -> np.ndarray:
    """Exact value function of a policy for a scalar reward table."""
    P_pi = policy_transition(mdp, policy)
    r_pi = np.einsum("sa,sa->s", policy.action_probs, rewards)
    return np.linalg.solve(np.eye(mdp.num_states) - mdp.gamma * P_pi, r_pi)


def value_iteration(mdp: VectorMDP, rewards: np.ndarray, tol: float,
                    v0: np.ndarray | None = None, max_iter: int = 10**6):
    """Run VI to Bellman residual <= tol; greedy ties break to the lowest action."""
    v = np.zeros(mdp.num_states) if v0 is None else np.asarray(v0, dtype=float).copy()
    gamma = mdp.gamma
    for _ in range(max_iter):
        q = rewards + gamma * (mdp.transition @ v)
        v_next = q.max(axis=1)
        if np.max(np.abs(v_next - v)) <= tol:
            greedy = StationaryPolicy.deterministic(np.argmax(q, axis=1), mdp.num_actions)
            return v_next, greedy
        v = v_next
    raise RuntimeError("value iteration failed to converge")


def best_response(mdp: VectorMDP, lam: np.ndarray, cfg: OracleConfig,
                  rng: np.random.Generator | None = None,
                  warm_start: StationaryPolicy | None = None) -> OracleResponse:
    """Policy (nearly) maximizing the long-term reward -<lam, z-bar(pi)>."""
    lam = np.asarray(lam, dtype=float)
    if not np.all(np.isfinite(lam)):
        raise ValueError("lambda must be finite")
    if float(np.linalg.norm(lam)) > 1.0 + 1e-9:
        raise ValueError("lambda must lie in the unit ball")
    rewards = scalar_rewards(mdp, lam)
    if cfg.mode == "exact":
        v0 = evaluate_policy(mdp, warm_start, rewards) if warm_start is not None else None
        _, policy = value_iteration(mdp, rewards, cfg.vi_tolerance, v0=v0)
        d = occupancy(mdp, policy)
        value = float(d @ np.einsum("sa,sa->s", policy.action_probs, rewards))
        return OracleResponse(policy, value)
    if rng is None:
        raise ValueError("sampled mode needs an rng")
    return _q_learning(mdp, rewards, cfg, rng, warm_start, stop_at_threshold=None)


def positive_response(mdp: VectorMDP, lam: np.ndarray, cfg: OracleConfig,
                      rng: np.random.Generator | None = None,
                      warm_start: StationaryPolicy | None = None) -> OracleResponse:
    """Weaker oracle: any policy whose long-term reward clears -eps.

    Exact mode reuses best_response and flags the answer when even the best
    policy is below threshold.  Sampled mode stops Q-learning as soon as the
    trailing average of the last trailing_n episode rewards clears
    -trailing_eps, and flags the answer if max_episodes runs out first.
    """
    if cfg.mode == "exact":
        resp = best_response(mdp, lam, cfg)
        eps0, _ = effective_epsilons(mdp, cfg)
        resp.above_threshold = resp.value >= -eps0
        return resp
    if rng is None:
        raise ValueError("sampled mode needs an rng")
    rewards = scalar_rewards(mdp, lam)
    return _q_learning(mdp, rewards, cfg, rng, warm_start, stop_at_threshold=cfg.trailing_eps)


def _q_learning(mdp: VectorMDP, rewards: np.ndarray, cfg: OracleConfig,
                rng: np.random.Generator, warm_start: StationaryPolicy | None,
                stop_at_threshold: float | None) -> OracleResponse:
    """Tabular epsilon-greedy Q-learning with trailing-average bookkeeping."""
    S, A = mdp.num_states, mdp.num_actions
    horizon = cfg.horizon if cfg.horizon is not None else default_horizon(mdp)
    if warm_start is not None:
        # Bias initial Q toward the warm-start action table.
        q = (mdp.bound / (1.0 - mdp.gamma)) * warm_start.action_probs.copy()
    else:
        q = np.zeros((S, A))
    visits = np.zeros((S, A))
    trail_r: list[float] = []
    trail_z: list[np.ndarray] = []
    gamma = mdp.gamma
    for episode in range(1, cfg.max_episodes + 1):
        s = rng.choice(S, p=mdp.initial_dist)
        disc = 1.0
        ep_reward = 0.0
        ep_z = np.zeros(mdp.dim)
        for _ in range(horizon):
            if rng.random() < cfg.explore_eps:
                a = rng.integers(A)
            else:
                a = int(np.argmax(q[s]))
            visits[s, a] += 1
            s_next = rng.choice(S, p=mdp.transition[s, a])
            if mdp.measurement_noise is None:
                z = mdp.measurement_mean[s, a]
            else:
                noise = mdp.measurement_noise
                k = rng.choice(noise.probs.shape[2], p=noise.probs[s, a])
                z = noise.support[s, a, k]
            r = float(rewards[s, a])
            alpha = 1.0 / (1.0 + visits[s, a]) ** 0.6
            q[s, a] += alpha * (r + gamma * q[s_next].max() - q[s, a])
            ep_reward += disc * r
            ep_z += disc * z
            disc *= gamma
            s = s_next
        trail_r.append(ep_reward)
        trail_z.append(ep_z)
        if len(trail_r) > cfg.trailing_n:
            trail_r.pop(0)
            trail_z.pop(0)
        if (stop_at_threshold is not None and len(trail_r) == cfg.trailing_n
                and float(np.mean(trail_r)) >= -stop_at_threshold):
            policy = StationaryPolicy.deterministic(np.argmax(q, axis=1), A)
            return OracleResponse(policy, float(np.mean(trail_r)), True,
                                  z_hat=np.mean(trail_z, axis=0), episodes=episode)
    policy = StationaryPolicy.deterministic(np.argmax(q, axis=1), A)
    trailing_mean = float(np.mean(trail_r)) if trail_r else -math.inf
    z_hat = np.mean(trail_z, axis=0) if trail_z else None
    return OracleResponse(policy, trailing_mean,
                          above_threshold=stop_at_threshold is None,
                          z_hat=z_hat if stop_at_threshold is not None else None,
                          episodes=cfg.max_episodes)


def estimate(mdp: VectorMDP, policy: StationaryPolicy, cfg: OracleConfig,
             rng: np.random.Generator | None = None,
             n_workers: int = 1) -> tuple[np.ndarray, float]:
    """Estimate the policy's long-term measurement.

    Exact mode: the linear solve itself, with zero reported error.  Sampled
    mode: est_rollouts truncated rollouts; the reported eps1 combines the
    worst-case truncation bias with a 3-standard-error half width.
    """
    if cfg.mode == "exact":
        return long_term_measurement(mdp, policy), 0.0
    if rng is None:
        raise ValueError("sampled mode needs an rng")
    m = cfg.est_rollouts
    horizon = cfg.horizon if cfg.horizon is not None else default_horizon(mdp)
    n_chunks = math.ceil(m / ESTIMATE_CHUNK)
    sizes = [ESTIMATE_CHUNK] * (n_chunks - 1) + [m - ESTIMATE_CHUNK * (n_chunks - 1)]
    child_rngs = rng.spawn(n_chunks)

    def run_chunk(args):
        size, child = args
        return sample_discounted_sums(mdp, policy, size, horizon, child)

    jobs = list(zip(sizes, child_rngs))
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            parts = list(pool.map(run_chunk, jobs))
    else:
        parts = [run_chunk(j) for j in jobs]
    samples = np.concatenate(parts, axis=0)
    z_hat = samples.mean(axis=0)
    truncation = mdp.gamma ** horizon * mdp.bound / (1.0 - mdp.gamma) * math.sqrt(mdp.dim)
    if m > 1:
        se = samples.std(axis=0, ddof=1) / math.sqrt(m)
        half_width = 3.0 * float(np.linalg.norm(se))
    else:
        half_width = 0.0
    return z_hat, truncation + half_width


# ---------------------------------------------------------------------------
# Policy cache.
# ---------------------------------------------------------------------------


@dataclass
class CacheEntry:
    policy: StationaryPolicy
    z_hat: np.ndarray
    iteration: int          # round that produced the policy (0 = seed policy)
    lam: np.ndarray         # the lambda it responded to

    def reward_under(self, lam: np.ndarray) -> float:
        return -float(np.asarray(lam) @ self.z_hat)


@dataclass
class CacheLookup:
    hit: bool
    entry: CacheEntry | None  # hit entry, or best warm-start candidate on miss
    index: int | None = None  # position of `entry` in the cache


@dataclass
class PolicyCache:
    """Append-only store of (policy, z_hat, provenance) with hit/miss counters."""

    entries: list = field(default_factory=list)
    hits: int = 0
    misses: int = 0

    def lookup(self, lam: np.ndarray, threshold_eps: float) -> CacheLookup:
        """Hit: first-inserted entry with -<lam, z_hat> >= -threshold_eps.
        Miss: returns the best entry (max reward) as a warm-start hint."""
        lam = np.asarray(lam, dtype=float)
        best = None
        best_idx = None
        best_val = -math.inf
        for i, entry in enumerate(self.entries):
            val = entry.reward_under(lam)
            if val >= -threshold_eps:
                self.hits += 1
                return CacheLookup(True, entry, i)
            if val > best_val:
                best, best_idx, best_val = entry, i, val
        self.misses += 1
        return CacheLookup(False, best, best_idx)

    def add(self, entry: CacheEntry) -> int:
        self.entries.append(entry)
        return len(self.entries) - 1

    def dump_csv(self, path) -> None:
        with open(path, "w") as fh:
            if self.entries:
                d = self.entries[0].z_hat.shape[0]
                zcols = ",".join(f"zhat_{j}" for j in range(d))
                lcols = ",".join(f"lambda_{j}" for j in range(d))
                fh.write(f"policy_id,iteration,{zcols},{lcols}\n")
            for i, entry in enumerate(self.entries):
                z = ",".join(f"{v:.17g}" for v in entry.z_hat)
                l = ",".join(f"{v:.17g}" for v in entry.lam)
                fh.write(f"{i},{entry.iteration},{z},{l}\n")


def init_cache(mdp: VectorMDP, cfg: OracleConfig, rng: np.random.Generator,
               k: int = 5) -> PolicyCache:
    """Seed the cache with k uniformly random deterministic policies."""
    cache = PolicyCache()
    zeros = np.zeros(mdp.dim)
    for _ in range(k):
        actions = rng.integers(mdp.num_actions, size=mdp.num_states)
        policy = StationaryPolicy.deterministic(actions, mdp.num_actions)
        z_hat, _ = estimate(mdp, policy, cfg, rng=rng)
        cache.add(CacheEntry(policy, z_hat, 0, zeros))
    return cache
