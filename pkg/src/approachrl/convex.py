"""Convex target sets, Euclidean projections, and polar-cone machinery.

The online learner plays inside Lambda = (polar of C) intersected with the
unit ball.  For any closed convex cone C the polar projection comes for free
from the primal one via the Moreau decomposition x = proj_C(x) + proj_polar(x),
and the Euclidean distance to C equals max over Lambda of <lambda, x>.

Compact targets are handled by lifting: embed C at height kappa and take the
generated cone; distances transfer back with a (1 + delta) factor.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog, lsq_linear, nnls

DYKSTRA_TOL = 1e-10
DYKSTRA_MAX_SWEEPS = 10**4
LIFT_SEARCH_TOL = 1e-10
LIFT_SCAN_POINTS = 64
VERTEX_ENUM_MAX = 2**16


class ProjectionError(RuntimeError):
    """Raised when an iterative projection cannot certify its answer."""


def _freeze(arr) -> np.ndarray:
    out = np.ascontiguousarray(np.asarray(arr, dtype=float))
    out.setflags(write=False)
    return out


class TargetSet:
    """Base for all target-set kinds; subclasses implement project()."""

    kind = "abstract"
    is_cone = False
    dim = 0

    def project(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        return distance(self, x) <= tol


@dataclass(frozen=True)
class Box(TargetSet):
    """Axis-aligned box [lower, upper]; also used as an OGD decision set."""

    lower: np.ndarray
    upper: np.ndarray
    kind = "box"
    is_cone = False

    def __post_init__(self):
        object.__setattr__(self, "lower", _freeze(self.lower))
        object.__setattr__(self, "upper", _freeze(self.upper))
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise ValueError("box bounds must be equal-length vectors")
        if np.any(self.lower > self.upper):
            raise ValueError("box is empty: lower > upper somewhere")

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)

    def minimize_linear(self, g: np.ndarray) -> np.ndarray:
        """argmin over the box of <g, x> (exact, per coordinate)."""
        return np.where(np.asarray(g) > 0, self.lower, self.upper)

    def maximize_linear(self, g: np.ndarray) -> np.ndarray:
        return np.where(np.asarray(g) > 0, self.upper, self.lower)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))


@dataclass(frozen=True)
class Ball(TargetSet):
    center: np.ndarray
    radius: float
    kind = "ball"
    is_cone = False

    def __post_init__(self):
        object.__setattr__(self, "center", _freeze(self.center))
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def project(self, x: np.ndarray) -> np.ndarray:
        delta = np.asarray(x, dtype=float) - self.center
        norm = np.linalg.norm(delta)
        if norm <= self.radius:
            return np.asarray(x, dtype=float)
        return self.center + delta * (self.radius / norm)


@dataclass(frozen=True)
class Polytope(TargetSet):
    """Halfspace intersection {x : normals @ x <= offsets}.

    Projection runs Dykstra's alternating scheme over the individual
    halfspaces; a polytope with all-zero offsets is a cone.
    """

    normals: np.ndarray
    offsets: np.ndarray
    kind = "polytope"

    def __post_init__(self):
        object.__setattr__(self, "normals", _freeze(self.normals))
        object.__setattr__(self, "offsets", _freeze(self.offsets))
        A, b = self.normals, self.offsets
        if A.ndim != 2 or b.shape != (A.shape[0],):
            raise ValueError("normals must be (m, d) with one offset per row")
        if np.any(np.linalg.norm(A, axis=1) == 0):
            raise ValueError("zero normal row")
        # Reject empty intersections at build time.
        res = linprog(c=np.zeros(A.shape[1]), A_ub=A, b_ub=b,
                      bounds=[(None, None)] * A.shape[1], method="highs")
        if res.status == 2:
            raise ValueError("polytope is empty")
        # When every row constrains a single coordinate the set is a box in
        # disguise and projection is a clip; spot that once, here.
        axis_aligned = bool(np.all(np.count_nonzero(A, axis=1) == 1))
        lo = np.full(A.shape[1], -np.inf)
        hi = np.full(A.shape[1], np.inf)
        if axis_aligned:
            cols = np.argmax(A != 0, axis=1)
            for i in range(A.shape[0]):
                a = A[i, cols[i]]
                if a > 0:
                    hi[cols[i]] = min(hi[cols[i]], b[i] / a)
                else:
                    lo[cols[i]] = max(lo[cols[i]], b[i] / a)
        object.__setattr__(self, "_axis_aligned", axis_aligned)
        object.__setattr__(self, "_axis_lo", _freeze(lo))
        object.__setattr__(self, "_axis_hi", _freeze(hi))

    @property
    def dim(self) -> int:
        return self.normals.shape[1]

    @property
    def is_cone(self) -> bool:  # type: ignore[override]
        return bool(np.all(self.offsets == 0.0))

    def project(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self._axis_aligned:
            return np.clip(x, self._axis_lo, self._axis_hi)
        A, b = self.normals, self.offsets
        sq = np.einsum("md,md->m", A, A)
        scale = max(1.0, float(np.linalg.norm(x)))
        y = x.copy()
        corrections = np.zeros((A.shape[0], x.shape[0]))
        for _ in range(DYKSTRA_MAX_SWEEPS):
            moved = 0.0
            for i in range(A.shape[0]):
                w = y + corrections[i]
                viol = float(A[i] @ w) - b[i]
                y_new = w - (viol / sq[i]) * A[i] if viol > 0 else w
                corrections[i] = w - y_new
                moved = max(moved, float(np.abs(y_new - y).max()))
                y = y_new
            residual = max(float((A @ y - b).max()), 0.0)
            if moved <= DYKSTRA_TOL * scale and residual <= DYKSTRA_TOL * scale:
                return y
        raise ProjectionError("Dykstra projection did not converge")

    def is_bounded(self) -> bool:
        A, b = self.normals, self.offsets
        for j in range(self.dim):
            for sign in (1.0, -1.0):
                c = np.zeros(self.dim)
                c[j] = sign
                res = linprog(c=c, A_ub=A, b_ub=b,
                              bounds=[(None, None)] * self.dim, method="highs")
                if res.status == 3:
                    return False
        return True


@dataclass(frozen=True)
class GeneratorCone(TargetSet):
    """Finitely generated cone {sum_i alpha_i g_i : alpha >= 0}; projection
    is the nonnegative least-squares fit onto the generators (exact)."""

    generators: np.ndarray
    kind = "cone"
    is_cone = True

    def __post_init__(self):
        object.__setattr__(self, "generators", _freeze(self.generators))
        if self.generators.ndim != 2 or self.generators.shape[0] == 0:
            raise ValueError("generators must be a nonempty (k, d) array")

    @property
    def dim(self) -> int:
        return self.generators.shape[1]

    def project(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        coef, _ = nnls(self.generators.T, x, maxiter=max(30 * self.generators.shape[0], 300))
        p = self.generators.T @ coef
        # nnls can stop at a non-optimal active set (seen on scipy 1.15);
        # optimality needs both KKT conditions — residual in the polar cone
        # (G(x-p) <= 0) and orthogonal to the answer ((x-p).p = 0) — so check
        # them and fall back to the slower BVLS solver when either fails.
        scale = max(1.0, float(np.linalg.norm(x)))

        def _suboptimal(pt):
            r = x - pt
            return (float((self.generators @ r).max()) > 1e-9 * scale
                    or abs(float(r @ pt)) > 1e-9 * scale * scale)

        if _suboptimal(p):
            res = lsq_linear(self.generators.T, x, bounds=(0.0, np.inf),
                             method="bvls", tol=1e-14)
            p = self.generators.T @ res.x
            if _suboptimal(p):
                raise ProjectionError("cone projection failed its optimality check")
        return p

    @classmethod
    def nonpositive_orthant(cls, dim: int) -> "GeneratorCone":
        return cls(-np.eye(dim))


@dataclass(frozen=True)
class LiftedCone(TargetSet):
    """Cone generated by (base x {kappa}) in one extra dimension.

    kappa = max_norm(base) / sqrt(2 * delta) gives
    dist(x, base) <= (1 + delta) * dist(x ++ kappa, lifted cone).
    """

    base: TargetSet
    kappa: float
    delta: float
    kind = "lifted-cone"
    is_cone = True

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.base.is_cone:
            raise ValueError("lifting expects a compact base, not a cone")
        # The base norm pins the alpha bracket for every projection; for
        # polytope bases it costs a pile of LPs, so pay once here.
        object.__setattr__(self, "_base_norm", max_norm(self.base))

    @property
    def dim(self) -> int:
        return self.base.dim + 1

    def _objective(self, x: np.ndarray, s: float, alpha: float):
        """Squared distance from (x, s) to the alpha-slice alpha*(base x {kappa})."""
        if alpha <= 0.0:
            return float(x @ x + s * s), None
        c = self.base.project(x / alpha)
        dx = x - alpha * c
        ds = s - alpha * self.kappa
        return float(dx @ dx + ds * ds), c

    def _derivative(self, x: np.ndarray, s: float, alpha: float) -> float:
        # Envelope (Danskin) derivative: the inner minimizer c is held fixed.
        _, c = self._objective(x, s, alpha)
        return float(-2.0 * c @ (x - alpha * c) - 2.0 * self.kappa * (s - alpha * self.kappa))

    def project(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.shape[0] != self.dim:
            raise ValueError("point dimension does not match the lifted cone")
        x, s = y[:-1], float(y[-1])
        norm_y = float(np.linalg.norm(y))
        if norm_y == 0.0:
            return np.zeros(self.dim)
        # Any point of the cone closer than the origin satisfies
        # alpha * kappa <= ||y||, so this bracket always contains the optimum.
        alpha_max = norm_y / self.kappa + self._base_norm
        grid = np.linspace(0.0, alpha_max, LIFT_SCAN_POINTS)
        vals = np.array([self._objective(x, s, a)[0] for a in grid])
        # The slice distance is convex in alpha; verify unimodality on the
        # scan before trusting a line search.
        i_min = int(np.argmin(vals))
        noise = 1e-12 * max(1.0, float(vals.max()))
        diffs = np.diff(vals)
        if np.any(diffs[:max(i_min, 0)] > noise) or np.any(diffs[i_min:] < -noise):
            raise ProjectionError("lifted-cone slice objective failed the unimodality scan")
        lo = grid[max(i_min - 1, 0)]
        hi = grid[min(i_min + 1, LIFT_SCAN_POINTS - 1)]
        lo, hi = self._golden_section(x, s, lo, hi, alpha_max)
        alpha = self._refine_by_derivative(x, s, lo, hi, alpha_max)
        # Alternating polish: with the base point fixed the optimal alpha is
        # closed-form, and with alpha fixed the optimal base point is one
        # projection; a few sweeps push the stationarity residual <r, p> from
        # line-search precision down to machine precision.
        for _ in range(8):
            _, c = self._objective(x, s, alpha)
            if c is None:
                break
            denom = float(c @ c) + self.kappa * self.kappa
            new_alpha = max((float(x @ c) + s * self.kappa) / denom, 0.0)
            if abs(new_alpha - alpha) <= 1e-15 * max(1.0, alpha):
                alpha = new_alpha
                break
            alpha = new_alpha
        val, c = self._objective(x, s, alpha)
        if c is None:
            return np.zeros(self.dim)
        return np.concatenate([alpha * c, [alpha * self.kappa]])

    def _golden_section(self, x, s, lo, hi, scale):
        invphi = (math.sqrt(5.0) - 1.0) / 2.0
        a, b = lo, hi
        c_pt = b - invphi * (b - a)
        d_pt = a + invphi * (b - a)
        fc = self._objective(x, s, c_pt)[0]
        fd = self._objective(x, s, d_pt)[0]
        tol = LIFT_SEARCH_TOL * max(1.0, scale)
        while b - a > tol:
            if fc <= fd:
                b, d_pt, fd = d_pt, c_pt, fc
                c_pt = b - invphi * (b - a)
                fc = self._objective(x, s, c_pt)[0]
            else:
                a, c_pt, fc = c_pt, d_pt, fd
                d_pt = a + invphi * (b - a)
                fd = self._objective(x, s, d_pt)[0]
        return a, b

    def _refine_by_derivative(self, x, s, lo, hi, scale) -> float:
        floor = 1e-16 * max(1.0, scale)
        a = max(lo, floor)
        b = max(hi, a)
        if b <= floor:
            return 0.5 * (lo + hi)
        da = self._derivative(x, s, a)
        db = self._derivative(x, s, b)
        if da > 0.0 or db < 0.0 or da * db > 0.0:
            # No sign change inside the bracket: the golden-section midpoint
            # is already within tolerance of the boundary minimizer.
            return 0.5 * (lo + hi)
        for _ in range(200):
            mid = 0.5 * (a + b)
            if b - a <= 1e-14 * max(1.0, scale):
                break
            dm = self._derivative(x, s, mid)
            if dm < 0.0:
                a = mid
            else:
                b = mid
        return 0.5 * (a + b)


def distance(target: TargetSet, x: np.ndarray) -> float:
    """Euclidean distance from x to the set."""
    x = np.asarray(x, dtype=float)
    return float(np.linalg.norm(x - target.project(x)))


def project_polar(cone: TargetSet, x: np.ndarray) -> np.ndarray:
    """Projection onto the polar cone via Moreau: x - proj_C(x)."""
    if not cone.is_cone:
        raise ValueError("polar projection is only defined for cones")
    x = np.asarray(x, dtype=float)
    return x - cone.project(x)


def project_lambda(cone: TargetSet, x: np.ndarray) -> np.ndarray:
    """Projection onto Lambda = polar(C) intersected with the unit ball."""
    r = project_polar(cone, x)
    return r / max(1.0, float(np.linalg.norm(r)))


def polytope_vertices(poly: Polytope) -> np.ndarray:
    """Enumerate vertices of a bounded polytope by brute force over
    d-subsets of active constraints (small instances only)."""
    A, b = poly.normals, poly.offsets
    m, d = A.shape
    if math.comb(m, d) > VERTEX_ENUM_MAX:
        raise ValueError("too many constraint subsets for vertex enumeration")
    verts = []
    for idx in itertools.combinations(range(m), d):
        sub = A[list(idx)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        v = np.linalg.solve(sub, b[list(idx)])
        if np.all(A @ v <= b + 1e-9):
            verts.append(v)
    if not verts:
        raise ValueError("no vertices found (degenerate or unbounded polytope)")
    uniq: dict[tuple, np.ndarray] = {}
    for v in verts:
        uniq[tuple(np.round(v, 9))] = v
    return np.array(list(uniq.values()))


def max_norm(target: TargetSet) -> float:
    """max ||x|| over a compact target (box/ball/bounded polytope)."""
    if isinstance(target, Box):
        return float(np.linalg.norm(np.maximum(np.abs(target.lower), np.abs(target.upper))))
    if isinstance(target, Ball):
        return float(np.linalg.norm(target.center)) + float(target.radius)
    if isinstance(target, Polytope):
        if target.is_cone or not target.is_bounded():
            raise ValueError("max_norm requires a bounded set")
        if math.comb(target.normals.shape[0], target.dim) <= VERTEX_ENUM_MAX:
            verts = polytope_vertices(target)
            return float(np.max(np.linalg.norm(verts, axis=1)))
        # Too many vertices to enumerate: certified upper bound from the
        # per-coordinate ranges (bounding-box corner).  An over-estimate is
        # sound everywhere max_norm is consumed (lifting heights only grow).
        corner = np.empty(target.dim)
        for j in range(target.dim):
            vals = []
            for sign in (1.0, -1.0):
                c = np.zeros(target.dim)
                c[j] = sign
                res = linprog(c=c, A_ub=target.normals, b_ub=target.offsets,
                              bounds=[(None, None)] * target.dim, method="highs")
                if res.status != 0:
                    raise ValueError("coordinate-range LP failed on the polytope")
                vals.append(abs(res.fun))
            corner[j] = max(vals)
        return float(np.linalg.norm(corner))
    raise ValueError(f"max_norm undefined for kind {target.kind!r}")


def lift(base: TargetSet, delta: float, kappa: float | None = None) -> LiftedCone:
    """Embed a compact base at height kappa and take the generated cone.

    With the default kappa = max_norm(base)/sqrt(2*delta), base distances are
    recovered within a factor (1 + delta).  An explicit (larger) kappa is
    allowed; the stored delta is then the effective one.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    norm = max_norm(base)
    if kappa is None:
        if norm == 0.0:
            raise ValueError("cannot lift the trivial set {0}")
        kappa = norm / math.sqrt(2.0 * delta)
    else:
        if kappa <= 0:
            raise ValueError("kappa must be positive")
        delta = (norm / kappa) ** 2 / 2.0
    return LiftedCone(base, float(kappa), float(delta))


@dataclass(frozen=True)
class LambdaSet:
    """Decision set Lambda = polar(C) intersected with the unit ball."""

    cone: TargetSet

    def __post_init__(self):
        if not self.cone.is_cone:
            raise ValueError("LambdaSet needs a cone")

    @property
    def dim(self) -> int:
        return self.cone.dim

    def project(self, x: np.ndarray) -> np.ndarray:
        return project_lambda(self.cone, x)

    def minimize_linear(self, g: np.ndarray) -> np.ndarray:
        """Exact argmin over Lambda of <g, lam>.

        min over Lambda of <g, .> equals -dist(-g, C), attained by the
        normalized polar residual of -g (or 0 when -g already lies in C).
        A residual at rounding-noise level is treated as zero: normalizing
        it would return an arbitrary unit direction.
        """
        g = np.asarray(g, dtype=float)
        r = project_polar(self.cone, -g)
        norm = float(np.linalg.norm(r))
        if norm <= 1e-12 * max(1.0, float(np.linalg.norm(g))):
            return np.zeros(self.dim)
        return r / norm

    def contains(self, lam: np.ndarray, tol: float = 1e-9) -> bool:
        lam = np.asarray(lam, dtype=float)
        if np.linalg.norm(lam) > 1.0 + tol:
            return False
        # lam lies in the polar cone iff its projection onto C is zero.
        return float(np.linalg.norm(self.cone.project(lam))) <= tol


def sample_point(target: TargetSet, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """Draw some member of the set (used for invariant spot checks)."""
    if isinstance(target, Box):
        return rng.uniform(target.lower, target.upper)
    if isinstance(target, Ball):
        direction = rng.normal(size=target.dim)
        direction /= max(np.linalg.norm(direction), 1e-12)
        radius = target.radius * rng.random() ** (1.0 / max(target.dim, 1))
        return target.center + radius * direction
    if isinstance(target, GeneratorCone):
        coef = rng.random(target.generators.shape[0]) * scale
        return target.generators.T @ coef
    if isinstance(target, LiftedCone):
        c = sample_point(target.base, rng)
        alpha = rng.random() * scale
        return np.concatenate([alpha * c, [alpha * target.kappa]])
    if isinstance(target, Polytope):
        probe = rng.normal(size=target.dim) * scale
        return target.project(probe)
    raise ValueError(f"sampling not supported for kind {target.kind!r}")
