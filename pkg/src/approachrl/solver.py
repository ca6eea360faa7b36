"""Repeated-game drivers that steer long-term measurements into convex sets.

One loop underlies everything: an online-gradient-descent player walks
lambda_t inside Lambda = polar(C) n unit-ball, an RL oracle answers each
lambda_t with a policy for the scalar reward -<lambda_t, z>, and the uniform
mixture of the answered policies is the output.  The distance of the mixture's
long-term measurement to C shrinks at the no-regret rate

    (B/(1-gamma) + eps1) / sqrt(T) + eps0 + 2*eps1

on top of the best achievable distance.  Compact (non-cone) targets are lifted
to a cone in one extra dimension first; a reward-threshold binary search wraps
the feasibility variant.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .convex import Box, LambdaSet, LiftedCone, Polytope, TargetSet, distance, lift
from .mdp import FiniteMeasurementNoise, MixedPolicy, VectorMDP, mixed_measurement
from .ogd import OgdState, ogd_step, realized_regret, tuned_step_size
from .oracles import (CacheEntry, OracleConfig, PolicyCache, best_response,
                      effective_epsilons, estimate, init_cache, positive_response)

FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
EMPIRICALLY_INFEASIBLE = "empirically_infeasible"
COMPLETE = "complete"


def distance_bound(bound: float, gamma: float, eps0: float, eps1: float, rounds: int,
                   kappa: float | None = None, delta: float | None = None) -> float:
    """Additive convergence slack after `rounds` iterations.

    Plain cone targets:   (B/(1-gamma) + eps1)/sqrt(T) + eps0 + 2*eps1.
    Lifted targets (kappa, delta given): the same expression with B/(1-gamma)
    replaced by (B+kappa)/(1-gamma), all multiplied by (1+delta).
    """
    if not (0.0 < gamma < 1.0):
        raise ValueError("gamma must lie in (0, 1)")
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if (kappa is None) != (delta is None):
        raise ValueError("kappa and delta must be supplied together")
    if kappa is None:
        slack = (bound / (1.0 - gamma) + eps1) / math.sqrt(rounds) + eps0 + 2.0 * eps1
        return slack
    base = ((bound + kappa) / (1.0 - gamma) + eps1) / math.sqrt(rounds) + eps0 + 2.0 * eps1
    return (1.0 + delta) * base


@dataclass
class TraceRow:
    t: int
    lam: np.ndarray
    policy_id: int
    z_hat: np.ndarray
    loss: float
    running_mean: np.ndarray
    running_distance: float
    cache_hit: bool


@dataclass
class RunTrace:
    """Per-iteration log plus run-level accounting."""

    dim: int
    eta: float
    rows: list = field(default_factory=list)
    wall_clock: float = 0.0
    episodes: int = 0
    oracle_calls: int = 0
    cache_hits: int = 0
    mixed_policy: MixedPolicy | None = None
    final_measurement: np.ndarray | None = None
    final_distance: float | None = None
    bound: float | None = None
    cache: PolicyCache | None = None
    extras: dict = field(default_factory=dict)

    def summary(self) -> dict:
        out = {
            "rounds": len(self.rows),
            "eta": self.eta,
            "wall_clock_seconds": self.wall_clock,
            "episodes": self.episodes,
            "oracle_calls": self.oracle_calls,
            "cache_hits": self.cache_hits,
            "final_distance": self.final_distance,
            "bound": self.bound,
        }
        if self.final_measurement is not None:
            out["final_measurement"] = [float(v) for v in self.final_measurement]
        out.update(self.extras)
        return out


def write_trace_csv(trace: RunTrace, path) -> None:
    """Fixed-schema CSV: t, lambda components, zhat components, loss,
    running_distance, cache_hit."""
    d = trace.dim
    lcols = ",".join(f"lambda_{j}" for j in range(d))
    zcols = ",".join(f"zhat_{j}" for j in range(d))
    with open(path, "w") as fh:
        fh.write(f"t,{lcols},{zcols},loss,running_distance,cache_hit\n")
        for row in trace.rows:
            lam = ",".join(f"{v:.17g}" for v in row.lam)
            z = ",".join(f"{v:.17g}" for v in row.z_hat)
            fh.write(f"{row.t},{lam},{z},{row.loss:.17g},"
                     f"{row.running_distance:.17g},{int(row.cache_hit)}\n")


@dataclass
class FeasibilityOutcome:
    """Result of a feasibility-style run (also reused by run_general).

    status: feasible | infeasible | empirically_infeasible | complete.
    Infeasible outcomes carry the witnessing round; feasible/complete ones
    carry the mixture and its exact achieved distance.
    """

    status: str
    mixed_policy: MixedPolicy | None = None
    distance: float | None = None
    witness_iteration: int | None = None
    witness_lambda: np.ndarray | None = None
    witness_loss: float | None = None
    trace: RunTrace | None = None
    extras: dict = field(default_factory=dict)


def _default_eta(mdp: VectorMDP, eps1: float, rounds: int) -> float:
    return 1.0 / ((mdp.bound / (1.0 - mdp.gamma) + eps1) * math.sqrt(rounds))


def _drive(mdp: VectorMDP, cone: TargetSet, cfg: OracleConfig, rounds: int,
           eta: float | None, mode: str, rng: np.random.Generator,
           cache: PolicyCache | None, n_workers: int = 1,
           iteration_offset: int = 0):
    """Shared game loop.  mode 'distance' uses the best-response oracle and
    always runs all rounds; mode 'feasibility' uses the positive-response
    oracle and stops with a witness as soon as the loss certifies that no
    mixed policy can reach the cone."""
    if not cone.is_cone:
        raise ValueError("the driver needs a cone target (lift compact sets first)")
    if cone.dim != mdp.dim:
        raise ValueError("target dimension does not match the MDP measurements")
    lamset = LambdaSet(cone)
    eps0, eps1 = effective_epsilons(mdp, cfg)
    if eta is None:
        eta = _default_eta(mdp, eps1, rounds)
    if cache is None:
        cache = init_cache(mdp, cfg, rng)
    hits0, misses0 = cache.hits, cache.misses
    trace = RunTrace(dim=mdp.dim, eta=eta)
    state = OgdState(np.zeros(mdp.dim), eta)
    policies: list = []
    z_sum = np.zeros(mdp.dim)
    status = FEASIBLE if mode == "feasibility" else COMPLETE
    witness = None
    started = time.perf_counter()
    for t in range(1, rounds + 1):
        lam = state.current.copy()
        look = cache.lookup(lam, eps0)
        flagged = False
        if look.hit:
            policy, z_hat = look.entry.policy, look.entry.z_hat
            policy_id = look.index
        else:
            warm = look.entry.policy if look.entry is not None else None
            if mode == "feasibility":
                resp = positive_response(mdp, lam, cfg, rng=rng, warm_start=warm)
            else:
                resp = best_response(mdp, lam, cfg, rng=rng, warm_start=warm)
            policy = resp.policy
            trace.oracle_calls += 1
            trace.episodes += resp.episodes
            if resp.z_hat is not None:
                z_hat = resp.z_hat
            else:
                z_hat, _ = estimate(mdp, policy, cfg, rng=rng, n_workers=n_workers)
            policy_id = cache.add(CacheEntry(policy, z_hat, iteration_offset + t, lam))
            flagged = not resp.above_threshold
        loss = -float(lam @ z_hat)
        policies.append(policy)
        z_sum = z_sum + z_hat
        running_mean = z_sum / t
        trace.rows.append(TraceRow(t, lam, policy_id, z_hat, loss, running_mean,
                                   distance(cone, running_mean), look.hit))
        ogd_step(state, -z_hat, lamset.project)
        if mode == "feasibility":
            if flagged and cfg.mode == "sampled":
                status = EMPIRICALLY_INFEASIBLE
                witness = (t, lam, loss)
                break
            if loss < -(eps0 + eps1):
                status = INFEASIBLE
                witness = (t, lam, loss)
                break
    trace.wall_clock = time.perf_counter() - started
    trace.cache_hits = cache.hits - hits0
    trace.cache = cache
    trace.bound = distance_bound(mdp.bound, mdp.gamma, eps0, eps1, rounds)
    mixture = None
    if witness is None:
        mixture = MixedPolicy.from_sequence(policies)
        trace.mixed_policy = mixture
        trace.final_measurement = mixed_measurement(mdp, mixture)
        trace.final_distance = distance(cone, trace.final_measurement)
    return status, mixture, witness, trace, cache, state


def run_distance(mdp: VectorMDP, cone: TargetSet, cfg: OracleConfig | None = None,
                 rounds: int = 2000, eta: float | None = None, seed: int = 0,
                 rng: np.random.Generator | None = None,
                 cache: PolicyCache | None = None,
                 n_workers: int = 1) -> tuple[MixedPolicy, RunTrace]:
    """Drive the long-term measurement as close to the cone as possible.

    Returns the uniform mixture over the per-round oracle answers together
    with the full trace; trace.final_distance carries the exact achieved
    distance and trace.bound the slack it is guaranteed to stay within
    (relative to the best achievable distance).
    """
    cfg = cfg or OracleConfig()
    rng = rng if rng is not None else np.random.default_rng(seed)
    _, mixture, _, trace, _, _ = _drive(mdp, cone, cfg, rounds, eta, "distance",
                                        rng, cache, n_workers)
    return mixture, trace


def run_feasibility(mdp: VectorMDP, cone: TargetSet, cfg: OracleConfig | None = None,
                    rounds: int = 2000, eta: float | None = None, seed: int = 0,
                    rng: np.random.Generator | None = None,
                    cache: PolicyCache | None = None,
                    n_workers: int = 1) -> FeasibilityOutcome:
    """Feasibility variant: either a mixture whose measurement (nearly)
    reaches the cone, or an infeasibility witness (t, lambda_t, loss).

    The witness test loss < -(eps0 + eps1) is sound: a feasible instance can
    never trigger it when the oracle/estimation error bounds hold.  Sampled
    runs may instead end empirically_infeasible when the RL oracle exhausts
    its episode budget below threshold.
    """
    cfg = cfg or OracleConfig()
    rng = rng if rng is not None else np.random.default_rng(seed)
    status, mixture, witness, trace, _, _ = _drive(mdp, cone, cfg, rounds, eta,
                                                   "feasibility", rng, cache, n_workers)
    out = FeasibilityOutcome(status, mixed_policy=mixture, trace=trace)
    if witness is not None:
        out.witness_iteration, out.witness_lambda, out.witness_loss = witness
    else:
        out.distance = trace.final_distance
    return out


def _augment(mdp: VectorMDP, kappa: float) -> VectorMDP:
    """Append the constant measurement coordinate (1-gamma)*kappa, so the
    long-term measurement of every policy gains a final coordinate kappa."""
    S, A, d = mdp.measurement_mean.shape
    extra = (1.0 - mdp.gamma) * kappa
    Z = np.concatenate([mdp.measurement_mean, np.full((S, A, 1), extra)], axis=2)
    noise = None
    if mdp.measurement_noise is not None:
        sup = mdp.measurement_noise.support
        K = sup.shape[2]
        sup2 = np.concatenate([sup, np.full((S, A, K, 1), extra)], axis=3)
        noise = FiniteMeasurementNoise(sup2, mdp.measurement_noise.probs)
    return VectorMDP(mdp.initial_dist, mdp.transition, Z, mdp.gamma,
                     mdp.bound + extra, measurement_noise=noise)


def run_general(mdp: VectorMDP, target: TargetSet, cfg: OracleConfig | None = None,
                rounds: int = 2000, delta: float = 0.5, variant: str = "distance",
                eta: float | None = None, kappa: float | None = None, seed: int = 0,
                rng: np.random.Generator | None = None,
                cache: PolicyCache | None = None,
                n_workers: int = 1) -> FeasibilityOutcome:
    """Compact-target variant: lift the target to a cone one dimension up,
    augment the MDP with the matching constant coordinate, run the chosen
    variant there, and report in the original space.

    The achieved original-space distance obeys

        dist <= (1+delta) * (best achievable dist + ((B+kappa)/(1-gamma)+eps1)/sqrt(T)
                             + eps0 + 2*eps1)
    """
    if variant not in ("distance", "feasibility"):
        raise ValueError("variant must be 'distance' or 'feasibility'")
    if target.is_cone:
        raise ValueError("run_general expects a compact target; use run_distance/"
                         "run_feasibility for cones")
    cfg = cfg or OracleConfig()
    rng = rng if rng is not None else np.random.default_rng(seed)
    cone = lift(target, delta, kappa=kappa)
    lifted_mdp = _augment(mdp, cone.kappa)
    eps0, eps1 = effective_epsilons(lifted_mdp, cfg)
    if eta is None:
        eta = 1.0 / (((mdp.bound + cone.kappa) / (1.0 - mdp.gamma) + eps1)
                     * math.sqrt(rounds))
    status, mixture, witness, trace, _, _ = _drive(lifted_mdp, cone, cfg, rounds, eta,
                                                   variant if variant == "feasibility" else "distance",
                                                   rng, cache, n_workers)
    d = mdp.dim
    # Reporting strips the synthetic coordinate; running distance is measured
    # against the original target.
    stripped = RunTrace(dim=d, eta=trace.eta, wall_clock=trace.wall_clock,
                        episodes=trace.episodes, oracle_calls=trace.oracle_calls,
                        cache_hits=trace.cache_hits, cache=trace.cache)
    for row in trace.rows:
        mean_d = row.running_mean[:d]
        stripped.rows.append(TraceRow(row.t, row.lam[:d], row.policy_id, row.z_hat[:d],
                                      row.loss, mean_d, distance(target, mean_d),
                                      row.cache_hit))
    lifted_bound = distance_bound(mdp.bound, mdp.gamma, eps0, eps1, rounds,
                                  kappa=cone.kappa, delta=cone.delta)
    stripped.bound = lifted_bound
    out = FeasibilityOutcome(status if variant == "feasibility" else COMPLETE,
                             mixed_policy=mixture, trace=stripped)
    out.extras = {"kappa": cone.kappa, "delta": cone.delta, "lifted_bound": lifted_bound}
    if witness is not None:
        out.witness_iteration, out.witness_lambda, out.witness_loss = witness
        out.witness_lambda = out.witness_lambda[:d]
    if mixture is not None:
        zbar = mixed_measurement(mdp, mixture)
        out.distance = distance(target, zbar)
        stripped.mixed_policy = mixture
        stripped.final_measurement = zbar
        stripped.final_distance = out.distance
        out.extras["lifted_distance"] = trace.final_distance
    return out


def _threshold_target(base: TargetSet, reward_coord: int, lo: float, cap: float) -> TargetSet:
    """Insert the interval [lo, cap] for the reward coordinate into a compact
    base over the remaining coordinates."""
    d = base.dim + 1
    if isinstance(base, Box):
        lower = np.insert(base.lower, reward_coord, lo)
        upper = np.insert(base.upper, reward_coord, cap)
        return Box(lower, upper)
    if isinstance(base, Polytope):
        normals = np.insert(base.normals, reward_coord, 0.0, axis=1)
        e = np.zeros(d)
        e[reward_coord] = 1.0
        normals = np.vstack([normals, -e, e])
        offsets = np.concatenate([base.offsets, [-lo, cap]])
        return Polytope(normals, offsets)
    raise ValueError("reward search supports box or polytope base constraints")


@dataclass
class RewardSearchResult:
    threshold: float | None          # best certified-feasible reward level (None: floor failed)
    mixed_policy: MixedPolicy | None
    floor_outcome: FeasibilityOutcome
    best_outcome: FeasibilityOutcome | None
    step_records: list               # (threshold, status, per-run trace summary)
    oracle_calls: int
    cache_hits: int
    resolution: float                # final bisection interval width
    kappa: float
    delta: float
    cache: PolicyCache


def maximize_reward(mdp: VectorMDP, base_constraints: TargetSet, reward_coord: int,
                    lo: float, hi: float, cfg: OracleConfig | None = None,
                    steps: int = 6, rounds: int = 2000, delta: float = 0.5,
                    seed: int = 0, rng: np.random.Generator | None = None,
                    n_workers: int = 1) -> RewardSearchResult:
    """Binary search for the largest reward threshold b such that
    base_constraints n {z_reward >= b} is still (empirically) reachable.

    The floor b = lo is checked first; if even that is infeasible the search
    stops with threshold None.  All bisection steps share one policy cache
    and one lifting constant kappa (computed from the widest target, at
    b = lo), so cached measurement estimates remain valid across thresholds.
    """
    cfg = cfg or OracleConfig()
    if not (lo < hi):
        raise ValueError("need lo < hi")
    if not (0 <= reward_coord <= base_constraints.dim):
        raise ValueError("reward_coord out of range")
    if base_constraints.dim + 1 != mdp.dim:
        raise ValueError("base constraints must cover all non-reward coordinates")
    rng = rng if rng is not None else np.random.default_rng(seed)
    cap = mdp.bound / (1.0 - mdp.gamma)
    widest = _threshold_target(base_constraints, reward_coord, lo, cap)
    cone0 = lift(widest, delta)
    kappa = cone0.kappa
    cache = init_cache(_augment(mdp, kappa), cfg, rng)

    def attempt(b: float) -> FeasibilityOutcome:
        target = _threshold_target(base_constraints, reward_coord, b, cap)
        return run_general(mdp, target, cfg, rounds=rounds, delta=delta,
                           variant="feasibility", kappa=kappa, rng=rng,
                           cache=cache, n_workers=n_workers)

    records = []
    floor = attempt(lo)
    records.append((lo, floor.status, floor.trace.summary()))
    oracle_calls = floor.trace.oracle_calls
    if floor.status != FEASIBLE:
        return RewardSearchResult(None, None, floor, None, records, oracle_calls,
                                  cache.hits, hi - lo, kappa, cone0.delta, cache)
    best_b, best_out = lo, floor
    lo_b, hi_b = lo, hi
    for _ in range(steps):
        mid = 0.5 * (lo_b + hi_b)
        out = attempt(mid)
        records.append((mid, out.status, out.trace.summary()))
        oracle_calls += out.trace.oracle_calls
        if out.status == FEASIBLE:
            best_b, best_out = mid, out
            lo_b = mid
        else:
            hi_b = mid
    return RewardSearchResult(best_b, best_out.mixed_policy, floor, best_out, records,
                              oracle_calls, cache.hits, hi_b - lo_b, kappa,
                              cone0.delta, cache)


# ---------------------------------------------------------------------------
# Generic bilinear games over boxes (certificate playground for the reduction).
# ---------------------------------------------------------------------------


@dataclass
class GameConfig:
    """Zero-sum bilinear game g(lam, u) = lam' M u over box decision sets.

    payoff may be the matrix itself or a bilinear callable; callables are
    probed for bilinearity and converted to their matrix."""

    payoff: object
    lambda_set: Box
    u_set: Box
    rounds: int
    eta: float | None = None

    def __post_init__(self):
        if not isinstance(self.lambda_set, Box) or not isinstance(self.u_set, Box):
            raise ValueError("lambda_set and u_set must be boxes")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        self.payoff_matrix = _payoff_matrix(self.payoff, self.lambda_set.dim,
                                            self.u_set.dim)


def _payoff_matrix(payoff, n: int, m: int) -> np.ndarray:
    if callable(payoff):
        M = np.empty((n, m))
        eye_n, eye_m = np.eye(n), np.eye(m)
        for i in range(n):
            for j in range(m):
                M[i, j] = payoff(eye_n[i], eye_m[j])
        rng = np.random.default_rng(0)
        for _ in range(8):
            lam, u = rng.normal(size=n), rng.normal(size=m)
            direct = payoff(lam, u)
            via_matrix = float(lam @ M @ u)
            scale = max(1.0, abs(direct), abs(via_matrix))
            if abs(direct - via_matrix) > 1e-8 * scale:
                raise ValueError("payoff callable failed the bilinearity probe")
        return M
    M = np.asarray(payoff, dtype=float)
    if M.shape != (n, m):
        raise ValueError("payoff matrix shape does not match the decision sets")
    return M


def _gradient_bound(M: np.ndarray, u_box: Box) -> float:
    """max over the u box of ||M u|| (exact on small boxes, safe bound else)."""
    m = u_box.dim
    if m <= 12:
        best = 0.0
        for mask in range(1 << m):
            u = np.where([(mask >> j) & 1 for j in range(m)], u_box.upper, u_box.lower)
            best = max(best, float(np.linalg.norm(M @ u)))
        return best
    # Larger boxes: per-row interval bound (an upper bound on the true max,
    # which keeps every regret certificate valid).
    row_max = np.maximum(M * u_box.lower, M * u_box.upper).sum(axis=1)
    row_min = np.minimum(M * u_box.lower, M * u_box.upper).sum(axis=1)
    return float(np.linalg.norm(np.maximum(np.abs(row_max), np.abs(row_min))))


def box_game_value(M: np.ndarray, lambda_box: Box, u_box: Box) -> float:
    """Exact game value max_lam min_u lam' M u over boxes, by LP.

    min_u is separable per coordinate, so with epigraph variables t_j the
    outer maximization is the LP  max sum_j t_j  s.t.
    t_j <= (M' lam)_j * e  for both endpoints e of u_j's interval."""
    n, m = M.shape
    c = np.concatenate([np.zeros(n), -np.ones(m)])
    rows = []
    for j in range(m):
        for endpoint in (u_box.lower[j], u_box.upper[j]):
            row = np.zeros(n + m)
            row[:n] = -endpoint * M[:, j]
            row[n + j] = 1.0
            rows.append(row)
    bounds = [(lo, hi) for lo, hi in zip(lambda_box.lower, lambda_box.upper)]
    bounds += [(None, None)] * m
    res = linprog(c=c, A_ub=np.array(rows), b_ub=np.zeros(len(rows)),
                  bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"game value LP failed: {res.message}")
    return -float(res.fun)


@dataclass
class GameCertificate:
    value: float
    regret: float
    delta: float
    min_payoff_at_lambda_bar: float
    max_payoff_at_u_bar: float
    certified: bool


@dataclass
class GameResult:
    lambda_bar: np.ndarray
    u_bar: np.ndarray
    certificate: GameCertificate
    lambda_history: np.ndarray
    u_history: np.ndarray
    losses: np.ndarray


def solve_game(cfg: GameConfig) -> GameResult:
    """Run the no-regret vs best-response dynamic for T rounds.

    The averages (lambda_bar, u_bar) are approximate equilibrium strategies:
    with delta = realized_regret / T,

        min_u g(lambda_bar, u) >= v - delta    and    max_lam g(lam, u_bar) <= v + delta.
    """
    M = cfg.payoff_matrix
    lam_box, u_box = cfg.lambda_set, cfg.u_set
    T = cfg.rounds
    G = max(_gradient_bound(M, u_box), 1e-12)
    D = max(lam_box.diameter, 1e-12)
    eta = cfg.eta if cfg.eta is not None else tuned_step_size(D, G, T)
    state = OgdState(lam_box.project(np.zeros(lam_box.dim)), eta)
    u_hist = np.empty((T, u_box.dim))
    lam_hist = np.empty((T, lam_box.dim))
    losses = np.empty(T)
    for t in range(T):
        lam = state.current
        u = u_box.minimize_linear(M.T @ lam)
        lam_hist[t] = lam
        u_hist[t] = u
        losses[t] = -float(lam @ M @ u)
        ogd_step(state, -(M @ u), lam_box.project)
    lam_bar = lam_hist.mean(axis=0)
    u_bar = u_hist.mean(axis=0)
    regret = realized_regret(state, lam_box)
    delta = regret / T
    v = box_game_value(M, lam_box, u_box)
    min_at_bar = float(lam_bar @ M @ u_box.minimize_linear(M.T @ lam_bar))
    max_at_bar = float(lam_box.maximize_linear(M @ u_bar) @ M @ u_bar)
    certified = (min_at_bar >= v - delta - 1e-9) and (max_at_bar <= v + delta + 1e-9)
    cert = GameCertificate(v, regret, delta, min_at_bar, max_at_bar, certified)
    return GameResult(lam_bar, u_bar, cert, lam_hist, u_hist, losses)
