import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from parqvi.constraints import (CircleSegment, GradientBall, HalfLine, TransformationMap, member,
                                mosco_gap, project, rotation_apply, rotation_matrix, transform)
from parqvi.exceptions import InfeasibleError, VariantMismatch
from parqvi.parameters import (PdeParameter, PiecewiseLinear, ScalarParameter, SweepParameter,
                               theta_distance)
from parqvi.spaces import SpaceMetric, TimeGrid
from oracles import gradient_ball_bruteforce

G1 = TimeGrid(1.0, 1)


def seg_param(a=(1.0, 0.0), gamma=0.5, grid=G1):
    K1 = grid.K + 1
    return SweepParameter(np.tile(a, (K1, 1)), PiecewiseLinear.constant(gamma),
                          np.tile([1.0, 0.0], (K1, 1)), grid, 0.05, 1.0)


def pde_param(n, gamma=1.0, grid=G1):
    return PdeParameter(PiecewiseLinear.constant(gamma), np.zeros((grid.K + 1, n)), grid, 0.5)


def test_member_examples():
    th = ScalarParameter([1.0, 1.0], G1)
    assert member(HalfLine(0.5), th, 1, np.array([0.6]), tol=0)
    assert not member(CircleSegment(), seg_param(), 1, np.array([1.0, 0.7]))
    m = SpaceMetric.interval(3, 1.0)
    assert member(GradientBall(m), pde_param(3), 1, np.array([0.0, 0.4, 0.0]))


def test_project_examples():
    th = ScalarParameter([1.0, 1.0], G1)
    assert project(HalfLine(0.5), th, 1, np.array([0.3]))[0] == 0.5
    assert np.allclose(project(CircleSegment(), seg_param(), 1, np.array([2.0, 1.0])), [1.0, 0.5])
    m = SpaceMetric.interval(3, 1.0)
    for method in ("chain", "dykstra"):
        x = GradientBall(m, method=method).project(pde_param(3), 1, np.array([0.0, 2.0, 0.0]))
        assert np.allclose(x, [0.0, 0.5, 0.0], atol=1e-10)


def test_variant_mismatch():
    with pytest.raises(VariantMismatch):
        HalfLine().project(seg_param(), 1, np.zeros(1))


def _random_pde(rng, n, grid=G1):
    gam = PiecewiseLinear([0, 1], [1.0, rng.uniform(0.3, 1.0)])
    return PdeParameter(gam, rng.uniform(0, 1, size=(grid.K + 1, n)), grid, 0.3)


def test_gradient_ball_matches_active_set_enumeration(rng):
    m = SpaceMetric.interval(5, 1.0)
    for _ in range(40):
        th = _random_pde(rng, 5)
        y = rng.normal(scale=rng.uniform(0.1, 1.5), size=5)
        fam = GradientBall(m)
        caps = m.mesh * fam.edge_bounds(th, 1)
        y0 = y.copy()
        y0[0] = y0[-1] = 0.0
        ref = gradient_ball_bruteforce(y0, m.weights, caps)
        assert np.max(np.abs(fam.project(th, 1, y) - ref)) < 1e-6
        dyk = GradientBall(m, method="dykstra").project(th, 1, y)
        assert np.max(np.abs(dyk - ref)) < 1e-6


def test_gradient_ball_dykstra_warm_start_agrees(rng):
    m = SpaceMetric.interval(20, 1.0)
    th = _random_pde(rng, 20)
    fam = GradientBall(m, method="dykstra")
    ws = {}
    for _ in range(3):
        y = rng.normal(size=20)
        assert np.allclose(fam.project(th, 1, y, ws), GradientBall(m).project(th, 1, y), atol=1e-6)
    assert ws["last_info"]["gap"] <= fam.gap_tol


def _cases(rng):
    """(family, theta, random state generator, random feasible point generator)."""
    th_s = ScalarParameter([1.0, 1.3], TimeGrid(1.0, 1), c0_slope=1.0)
    hl = HalfLine(0.2)
    yield hl, th_s, lambda: rng.normal(1, 1, size=1), lambda: np.array([1.1 + rng.exponential()])
    ang = rng.uniform(0, 2 * np.pi)
    th_c = seg_param((np.cos(ang), np.sin(ang)), 0.5)
    a = th_c.a[1]
    perp = np.array([-a[1], a[0]])
    yield (CircleSegment(), th_c, lambda: rng.normal(size=2) * 2,
           lambda: a + rng.uniform(-0.5, 0.5) * perp)
    m = SpaceMetric.interval(9, 1.0)
    fam = GradientBall(m)
    th_p = _random_pde(rng, 9)

    def feasible():
        return fam.project(th_p, 1, rng.normal(size=9) * rng.uniform(0.01, 0.3))
    yield fam, th_p, lambda: rng.normal(size=9), feasible


def test_projection_idempotent_and_optimal(rng):
    for fam, th, rand, feas in _cases(rng):
        weights = fam.metric.weights if isinstance(fam, GradientBall) else None
        ws = [feas() for _ in range(50)]
        for _ in range(200):
            z = rand()
            pz = fam.project(th, 1, z)
            assert member(fam, th, 1, pz, 1e-10)
            assert np.max(np.abs(fam.project(th, 1, pz) - pz)) <= 1e-10
            zz = z.copy()
            if weights is not None:
                zz[0] = zz[-1] = 0.0
            wv = np.ones(z.size) if weights is None else weights
            for w in ws:
                assert np.sum(wv * (zz - pz) * (w - pz)) <= 1e-8


def test_rotation_examples():
    z = np.array([0.3, -1.2])
    assert np.allclose(rotation_apply([1, 0], [1, 0], z), z)
    assert np.allclose(rotation_apply([1, 0], [0, 1], [1, 0]), [0, 1])
    r = np.sqrt(2) / 2
    assert np.allclose(rotation_apply([1, 0], [r, r], [0, 1]), [-r, r])


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 2 * np.pi), st.floats(0, 2 * np.pi))
def test_rotation_orthogonal(t1, t2):
    a = np.array([np.cos(t1), np.sin(t1)])
    ab = np.array([np.cos(t2), np.sin(t2)])
    R = rotation_matrix(a, ab)
    assert np.max(np.abs(R.T @ R - np.eye(2))) <= 1e-12
    assert np.max(np.abs(R @ a - ab)) <= 1e-12


def test_transform_segment_example():
    th = seg_param()
    tm = TransformationMap(CircleSegment())
    out = transform(tm, th, th, 0.1, 1, np.array([1.0, 0.5]))
    assert np.allclose(out, [1.0, 0.45])
    assert member(CircleSegment(), th, 1, out)
    with pytest.raises(InfeasibleError):
        transform(tm, th, th, 0.1, 1, np.array([1.0, 0.9]))


def test_transform_identity_limit(rng):
    th = seg_param()
    tm = TransformationMap(CircleSegment())
    z = np.array([1.0, 0.3])
    for eps in (1e-2, 1e-4, 1e-8):
        gap = np.linalg.norm(transform(tm, th, th, eps, 1, z) - z)
        assert gap <= eps * np.linalg.norm(z) + eps + 1e-15


def test_transform_gradient_scaling():
    m = SpaceMetric.interval(5, 1.0)
    fam = GradientBall(m)
    th = pde_param(5, 1.0)
    z = np.array([0.0, 0.25, 0.5, 0.25, 0.0])
    eps = 0.2
    out = transform(TransformationMap(fam), th, th, eps, 1, z)
    assert np.allclose(out, 0.8 * z)
    # feasible for a bar gamma as low as (1 - eps) * gamma
    assert member(fam, pde_param(5, 0.8), 1, out)


def test_A3_closure(rng):
    grid = TimeGrid(1.0, 2)
    cases = []
    for _ in range(100):
        eps = rng.uniform(0.01, 0.5)
        ang = rng.uniform(0, 2 * np.pi)
        th = seg_param((np.cos(ang), np.sin(ang)), rng.uniform(0.3, 0.9), grid)
        # rotate a by an angle small enough that d <= eps * gamma_lo
        phi = rng.uniform(-1, 1) * 0.5 * eps * th.gamma_lo
        ab = np.array([np.cos(ang + phi), np.sin(ang + phi)])
        thb = SweepParameter(np.tile(ab, (3, 1)), th.gamma, th.zeta, grid, th.gamma_lo, th.gamma_hi)
        a = th.a[0]
        z = a + rng.uniform(-1, 1) * th.radius(0) * np.array([-a[1], a[0]])
        cases.append((CircleSegment(), th, thb, eps, z))
    m = SpaceMetric.interval(6, 1.0)
    fam = GradientBall(m)
    for _ in range(100):
        eps = rng.uniform(0.01, 0.5)
        th = pde_param(6, 1.0, grid)
        thb = pde_param(6, 1.0 - 0.9 * eps * th.eps0 * rng.uniform(), grid)
        z = fam.project(th, 0, rng.normal(size=6))
        cases.append((fam, th, thb, eps, z))
    for _ in range(100):
        eps = rng.uniform(0.01, 0.5)
        z0 = np.concatenate([[1.0], 1 + np.cumsum(rng.uniform(0, 0.25, 2))])
        th = ScalarParameter(z0, grid)
        thb = ScalarParameter(z0 + np.array([0, 1, 1]) * rng.uniform(0, eps / 2), grid)
        cases.append((HalfLine(), th, thb, eps, np.array([z0[1] + rng.exponential()])))
    for fam, th, thb, eps, z in cases:
        tm = TransformationMap(fam)
        assert theta_distance(th, thb) <= tm.delta(th, eps) + 1e-12
        k = 1 if not isinstance(fam, CircleSegment) else 0
        out = transform(tm, th, thb, eps, k, z)
        assert member(fam, thb, k, out, 1e-8)


def test_mosco_gap_identity():
    grid = TimeGrid(1.0, 10)
    th = seg_param(grid=grid)
    eta = th.a + 0.2 * np.array([0.0, 1.0])
    rep = mosco_gap(TransformationMap(CircleSegment()), th, th, 1e-8, eta, grid,
                    SpaceMetric.euclidean(2))
    assert rep.gap <= 1e-6 * (1 + rep.eta_norm)
    assert rep.within_bound


def test_mosco_gap_center_closed_form():
    grid = TimeGrid(1.0, 20)
    phi, eps = 0.05, 0.1
    th = seg_param((1.0, 0.0), 0.5, grid)
    thb = seg_param((np.cos(phi), np.sin(phi)), 0.5, grid)
    rep = mosco_gap(TransformationMap(CircleSegment()), th, thb, eps, th.a, grid,
                    SpaceMetric.euclidean(2))
    # (1 - eps) R a + eps a_bar = a_bar, so the gap is |a_bar - a| = 2 sin(phi / 2)
    assert rep.gap == pytest.approx(2 * np.sin(phi / 2), rel=1e-12)
    assert rep.within_bound


def test_mosco_rejects_infeasible_eta():
    grid = TimeGrid(1.0, 4)
    th = seg_param(grid=grid)
    with pytest.raises(InfeasibleError):
        mosco_gap(TransformationMap(CircleSegment()), th, th, 0.1, th.a + [0.0, 0.9], grid,
                  SpaceMetric.euclidean(2))
