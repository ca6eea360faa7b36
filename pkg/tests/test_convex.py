"""Target sets, projections, polar cones, lifting."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from approachrl.convex import (Ball, Box, GeneratorCone, LambdaSet, LiftedCone,
                               Polytope, distance, lift, max_norm,
                               polytope_vertices, project_lambda, project_polar,
                               sample_point)


def npo(dim):
    return GeneratorCone.nonpositive_orthant(dim)


def random_cone(rng, dim, k):
    return GeneratorCone(rng.normal(size=(k, dim)))


# ---------------------------------------------------------------- projections

def test_box_projection_clamps():
    box = Box(lower=[-1.0, -1.0], upper=[1.0, 1.0])
    np.testing.assert_allclose(box.project(np.array([2.0, 0.5])), [1.0, 0.5])


def test_ball_projection_is_radial():
    ball = Ball(center=[0.0, 0.0], radius=1.0)
    np.testing.assert_allclose(ball.project(np.array([3.0, 4.0])), [0.6, 0.8])


def test_halfspace_intersection_projection():
    # {x + y <= 1} cap [0, 2]^2, projecting (1, 1)
    poly = Polytope(normals=[[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0],
                             [1.0, 0.0], [0.0, 1.0]],
                    offsets=[1.0, 0.0, 0.0, 2.0, 2.0])
    np.testing.assert_allclose(poly.project(np.array([1.0, 1.0])), [0.5, 0.5],
                               atol=1e-9)


def test_polytope_axis_aligned_agrees_with_general_path():
    # same box once as coordinate rows (clip path) and once with a redundant
    # oblique row forcing the alternating-projection path
    rows = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]
    offs = [1.0, 1.0, 2.0, 0.5]
    fast = Polytope(rows, offs)
    slow = Polytope(rows + [[1.0, 1.0]], offs + [100.0])
    assert fast._axis_aligned and not slow._axis_aligned
    rng = np.random.default_rng(0)
    for _ in range(50):
        x = rng.normal(size=2) * 3
        np.testing.assert_allclose(fast.project(x), slow.project(x), atol=1e-8)


def test_empty_polytope_rejected():
    with pytest.raises(ValueError):
        Polytope(normals=[[1.0], [-1.0]], offsets=[-1.0, -1.0])  # x<=-1 & x>=1


def test_projection_idempotent_and_feasible():
    rng = np.random.default_rng(1)
    sets = [Box(lower=[-1, 0.5], upper=[1, 2]),
            Ball(center=[1.0, -1.0], radius=0.7),
            Polytope([[1.0, 2.0], [-1.0, 0.0], [0.0, -1.0]], [2.0, 0.0, 0.0]),
            random_cone(rng, 3, 4)]
    for target in sets:
        for _ in range(40):
            x = rng.normal(size=target.dim) * 3
            p = target.project(x)
            np.testing.assert_allclose(target.project(p), p, atol=1e-8)
            assert target.contains(p, tol=1e-7)


def test_projection_variational_inequality():
    # (x - p) . (c - p) <= tol for members c: the defining property of the
    # Euclidean projection, checked against sampled members.
    rng = np.random.default_rng(2)
    targets = [Polytope([[1.0, 1.0], [-1.0, 0.5], [0.0, -1.0]], [1.5, 1.0, 0.4]),
               random_cone(rng, 3, 5),
               Ball(center=[0.5, 0.5], radius=1.2)]
    for target in targets:
        for _ in range(25):
            x = rng.normal(size=target.dim) * 4
            p = target.project(x)
            for _ in range(20):
                c = sample_point(target, rng, scale=2.0)
                assert (x - p) @ (c - p) <= 1e-8 * max(1.0, np.linalg.norm(x))


def test_projection_nonexpansive():
    rng = np.random.default_rng(3)
    targets = [Box(lower=[-1, -1], upper=[1, 1]),
               Ball(center=[0, 0], radius=2.0),
               Polytope([[2.0, -1.0], [0.0, 1.0]], [1.0, 3.0]),
               random_cone(rng, 4, 3)]
    for target in targets:
        for _ in range(60):
            x = rng.normal(size=target.dim) * 5
            y = rng.normal(size=target.dim) * 5
            lhs = np.linalg.norm(target.project(x) - target.project(y))
            assert lhs <= np.linalg.norm(x - y) + 1e-9


# ------------------------------------------------------------ polar machinery

def test_polar_projection_orthant_examples():
    cone = npo(2)
    np.testing.assert_allclose(project_polar(cone, np.array([3.0, 4.0])), [3, 4],
                               atol=1e-12)
    np.testing.assert_allclose(project_polar(cone, np.array([-1.0, -2.0])), [0, 0],
                               atol=1e-12)
    np.testing.assert_allclose(project_polar(cone, np.array([0.3, -2.0])), [0.3, 0],
                               atol=1e-12)


def test_lambda_projection_orthant_examples():
    cone = npo(2)
    np.testing.assert_allclose(project_lambda(cone, np.array([3.0, 4.0])), [0.6, 0.8],
                               atol=1e-12)
    np.testing.assert_allclose(project_lambda(cone, np.array([-1.0, -1.0])), [0, 0],
                               atol=1e-12)
    np.testing.assert_allclose(project_lambda(cone, np.array([0.3, -2.0])), [0.3, 0],
                               atol=1e-12)


def test_polar_projection_rejects_non_cones():
    with pytest.raises(ValueError):
        project_polar(Box(lower=[0.0], upper=[1.0]), np.array([1.0]))


def test_moreau_decomposition_many_cones():
    rng = np.random.default_rng(4)
    cones = [npo(2), npo(5), random_cone(rng, 3, 5), random_cone(rng, 4, 2),
             Polytope([[1.0, -1.0], [0.5, 1.0]], [0.0, 0.0]),
             lift(Box(lower=[-1, -1], upper=[1, 1]), 0.5)]
    per = 1000 // len(cones) + 1
    for cone in cones:
        for _ in range(per):
            x = rng.normal(size=cone.dim) * 3
            p = cone.project(x)
            q = project_polar(cone, x)
            np.testing.assert_allclose(p + q, x, atol=1e-8)
            assert abs(p @ q) <= 1e-8 * max(1.0, x @ x)
            assert cone.contains(p, tol=1e-7)
            # polar membership: q . c <= 0 for members c of the cone
            for _ in range(5):
                c = sample_point(cone, rng, scale=2.0)
                assert q @ c <= 1e-8 * max(1.0, np.linalg.norm(c))


def test_distance_attainment_and_upper_bound():
    # dist(x, C) = max over Lambda of lam.x, attained by the normalized
    # polar residual; every sampled lam in Lambda stays below it.
    rng = np.random.default_rng(5)
    for trial in range(200):
        cone = random_cone(rng, 3, 5)
        x = rng.normal(size=3) * 2
        dist = distance(cone, x)
        r = project_polar(cone, x)
        # unit residual attains the max (clipping by max{1, ||r||} would
        # understate whenever ||r|| < 1); interior points take lam* = 0
        rn = np.linalg.norm(r)
        lam_star = r / rn if rn > 1e-9 else np.zeros_like(r)
        assert abs(lam_star @ x - dist) <= 1e-8 * max(1.0, np.linalg.norm(x))
        lamset = LambdaSet(cone)
        for _ in range(25):
            lam = lamset.project(rng.normal(size=3) * 2)
            assert lam @ x <= dist + 1e-9


def test_distance_matches_sampled_lambda_maximum():
    rng = np.random.default_rng(6)
    cone = random_cone(rng, 3, 5)
    x = rng.normal(size=3) * 2
    dist = distance(cone, x)
    lamset = LambdaSet(cone)
    sampled = max(float(lamset.project(rng.normal(size=3) * 3) @ x)
                  for _ in range(10 ** 5))
    assert sampled <= dist + 1e-9          # sampled max is a lower bound
    assert sampled >= dist - 1e-3          # and it comes close


def test_orthant_distance_examples():
    cone = npo(2)
    assert distance(cone, np.array([1.0, 1.0])) == pytest.approx(np.sqrt(2), abs=1e-12)
    assert distance(cone, np.array([-0.5, -3.0])) == 0.0


@given(st.floats(0.0, 10.0))
@settings(max_examples=50, deadline=None)
def test_cone_projection_positive_homogeneity(alpha):
    rng = np.random.default_rng(7)
    cone = random_cone(rng, 3, 4)
    x = rng.normal(size=3)
    lhs = cone.project(alpha * x)
    rhs = alpha * cone.project(x)
    np.testing.assert_allclose(lhs, rhs, atol=1e-7 * max(1.0, alpha))
    assert distance(cone, alpha * x) == pytest.approx(alpha * distance(cone, x),
                                                      abs=1e-7 * max(1.0, alpha))


def test_lambda_set_membership_invariants():
    rng = np.random.default_rng(8)
    cone = random_cone(rng, 3, 4)
    lamset = LambdaSet(cone)
    for _ in range(200):
        lam = lamset.project(rng.normal(size=3) * 4)
        assert np.linalg.norm(lam) <= 1.0 + 1e-9
        for _ in range(10):
            c = sample_point(cone, rng, scale=3.0)
            assert lam @ c <= 1e-9 * max(1.0, np.linalg.norm(c))
        assert lamset.contains(lam)


# ----------------------------------------------------------------- lifting

def test_lift_singleton_example():
    base = Box(lower=[1.0], upper=[1.0])     # the point {1} on the line
    cone = lift(base, 0.5)
    assert cone.kappa == pytest.approx(1.0)
    p = cone.project(np.array([0.0, 1.0]))
    np.testing.assert_allclose(p, [0.5, 0.5], atol=1e-8)
    assert distance(cone, np.array([0.0, 1.0])) == pytest.approx(np.sqrt(0.5),
                                                                 abs=1e-8)
    # lifting distorts distance by at most (1 + delta)
    assert distance(base, np.array([0.0])) <= 1.5 * np.sqrt(0.5) + 1e-9


def test_lift_preserves_membership():
    base = Box(lower=[-1.0, 0.0], upper=[1.0, 2.0])
    cone = lift(base, 0.1)
    rng = np.random.default_rng(9)
    for _ in range(30):
        x = sample_point(base, rng)
        lifted = np.concatenate([x, [cone.kappa]])
        assert distance(cone, lifted) <= 1e-7


def test_lift_distance_inequality_unit_box():
    base = Box(lower=[-1.0, -1.0], upper=[1.0, 1.0])
    cone = lift(base, 0.1)
    rng = np.random.default_rng(10)
    for _ in range(100):
        x = rng.uniform(-3, 3, size=2)
        d_base = distance(base, x)
        d_cone = distance(cone, np.concatenate([x, [cone.kappa]]))
        assert d_base <= (1.0 + 0.1) * d_cone + 1e-8
        assert d_cone <= d_base + 1e-8     # the cone contains the lifted set


@pytest.mark.parametrize("delta", [0.05, 0.1, 0.5, 1.0])
def test_lift_distance_inequality_random_sets(delta):
    rng = np.random.default_rng(11)
    for _ in range(25):
        lo = rng.uniform(-2, 0, size=3)
        hi = lo + rng.uniform(0.1, 2, size=3)
        base = Box(lower=lo, upper=hi)
        cone = lift(base, delta)
        assert cone.kappa == pytest.approx(max_norm(base) / np.sqrt(2 * delta))
        x = rng.normal(size=3) * 3
        d_base = distance(base, x)
        d_cone = distance(cone, np.concatenate([x, [cone.kappa]]))
        assert d_base <= (1.0 + delta) * d_cone + 1e-8
        assert d_cone <= d_base + 1e-8


def test_lift_rejects_cones():
    with pytest.raises(ValueError):
        lift(npo(2), 0.5)


def test_lifted_projection_members_and_variational_inequality():
    base = Ball(center=[0.5, -0.5], radius=1.0)
    cone = lift(base, 0.5)
    rng = np.random.default_rng(12)
    for _ in range(40):
        y = rng.normal(size=3) * 4
        p = cone.project(y)
        assert cone.contains(p, tol=1e-6)
        for _ in range(10):
            c = sample_point(cone, rng, scale=2.0)
            assert (y - p) @ (c - p) <= 1e-6 * max(1.0, np.linalg.norm(y) ** 2)


# ----------------------------------------------------------------- max_norm

def test_max_norm_closed_forms():
    assert max_norm(Ball(center=[0.0, 0.0], radius=1.0)) == pytest.approx(1.0)
    assert max_norm(Box(lower=[-1.0, -3.0], upper=[2.0, 1.0])) == \
        pytest.approx(np.sqrt(13.0))


def test_max_norm_small_polytope_matches_vertex_scan():
    poly = Polytope([[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0], [1.0, -0.5]],
                    [1.5, 0.3, 0.6, 1.0])
    verts = polytope_vertices(poly)
    assert max_norm(poly) == pytest.approx(np.max(np.linalg.norm(verts, axis=1)))


def test_max_norm_large_polytope_upper_bound():
    # too many candidate vertex subsets for enumeration: the bounding-box
    # fallback must still dominate every sampled member's norm
    rng = np.random.default_rng(13)
    d = 9
    A = np.vstack([np.eye(d), -np.eye(d), rng.normal(size=(12, d))])
    b = np.concatenate([np.ones(2 * d), rng.uniform(1.0, 3.0, size=12)])
    poly = Polytope(A, b)
    bound = max_norm(poly)
    for _ in range(200):
        x = sample_point(poly, rng, scale=3.0)
        assert np.linalg.norm(x) <= bound + 1e-8


def test_max_norm_rejects_cones_and_unbounded_sets():
    with pytest.raises(ValueError):
        max_norm(npo(3))
    with pytest.raises(ValueError):
        max_norm(Polytope([[1.0, 0.0], [0.0, 1.0]], [1.0, 1.0]))  # unbounded below


def test_vertex_enumeration_unit_square():
    square = Polytope([[1.0, 0], [-1.0, 0], [0, 1.0], [0, -1.0]],
                      [1.0, 0.0, 1.0, 0.0])
    verts = polytope_vertices(square)
    expected = {(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)}
    assert {tuple(np.round(v, 9)) for v in verts} == expected
