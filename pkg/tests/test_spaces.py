import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from parqvi.exceptions import DimensionError
from parqvi.spaces import (SpaceMetric, TimeGrid, dual_norm, duality_map, h_inner, h_norm,
                           lp_h_norm, pairing, sup_h_norm, time_pairing, v_norm)


def test_h_inner_examples():
    m = SpaceMetric.euclidean(2)
    assert h_inner([1, 0], [0, 1], m) == 0
    assert h_inner([3, 4], [3, 4], m) == 25
    mw = SpaceMetric(n=2, weights=np.array([0.5, 0.5]))
    assert h_inner([1, 1], [1, 1], mw) == pytest.approx(1.0, abs=1e-15)


def test_v_norm_examples():
    assert v_norm(np.zeros(3), SpaceMetric.euclidean(3)) == 0
    assert v_norm([2.0], SpaceMetric.euclidean(1, p=3)) == pytest.approx(2.0, rel=1e-14)
    # 3 nodes on [0, 1]: slopes 2 and -2 over edges of width 0.5
    m = SpaceMetric.interval(3, 1.0)
    assert v_norm([0.0, 1.0, 0.0], m) == pytest.approx(2.0, rel=1e-14)


def test_duality_map_examples():
    m = SpaceMetric.euclidean(4)
    z = np.array([1.0, -2.0, 0.5, 3.0])
    assert np.array_equal(duality_map(z, m), z)
    assert np.all(duality_map(np.zeros(4), m) == 0)
    assert duality_map([2.0], SpaceMetric.euclidean(1, p=3))[0] == pytest.approx(4.0)


def test_time_pairing_examples():
    m = SpaceMetric.euclidean(1)
    g2 = TimeGrid(2.0, 8)
    ones = np.ones((9, 1))
    assert time_pairing(np.zeros((9, 1)), ones, g2, m) == 0
    assert time_pairing(ones, ones, g2, m) == pytest.approx(2.0)
    g = TimeGrid(1.0, 4)
    assert time_pairing(g.nodes[:, None], np.ones((5, 1)), g, m) == pytest.approx(0.375)
    with pytest.raises(DimensionError):
        time_pairing(np.ones((4, 1)), np.ones((5, 1)), g, m)


def test_grid_and_metric_validation():
    with pytest.raises(ValueError):
        TimeGrid(0.0, 10)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0)
    with pytest.raises(ValueError):
        SpaceMetric(n=3, p=1.5)
    with pytest.raises(ValueError):
        SpaceMetric(n=2, weights=np.array([1.0, 0.0]))
    with pytest.raises(DimensionError):
        h_norm(np.ones(3), SpaceMetric.euclidean(2))
    g = TimeGrid(1.0, 3)
    assert g.nodes[-1] == 1.0 and g.refine().K == 6


metrics = st.one_of(
    st.builds(lambda n, p: SpaceMetric.euclidean(n, p), st.integers(1, 6),
              st.sampled_from([2.0, 2.5, 3.0, 4.0])),
    st.builds(lambda n, L, p: SpaceMetric.interval(n, L, p), st.integers(3, 12),
              st.floats(0.5, 3.0), st.sampled_from([2.0, 3.0, 4.5])),
)


def _pinned(m, x):
    x = np.array(x, float)
    if m.v_mode == "discrete-gradient":
        x[0] = x[-1] = 0.0
    return x


def test_dual_norm_root_at_zero_shift():
    # optimal shift is exactly 0 here, which once stalled the root finder
    m = SpaceMetric.interval(5, 1.0, 3.0)
    z = np.array([0.0, 1.0, 2.0, 0.0, 0.0])
    assert dual_norm(duality_map(z, m), m) == pytest.approx(v_norm(z, m) ** 2, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(metrics, st.data())
def test_duality_identity(m, data):
    z = _pinned(m, data.draw(arrays(float, m.n, elements=st.floats(-5, 5))))
    vn = v_norm(z, m) ** m.p
    assert abs(pairing(duality_map(z, m), z, m) - vn) <= 1e-10 * (1 + vn)
    dn = dual_norm(duality_map(z, m), m)
    assert dn == pytest.approx(v_norm(z, m) ** (m.p - 1), rel=1e-8, abs=1e-10)


@settings(max_examples=100, deadline=None)
@given(metrics, st.data())
def test_duality_map_strictly_monotone(m, data):
    el = st.floats(-3, 3)
    z = _pinned(m, data.draw(arrays(float, m.n, elements=el)))
    w = _pinned(m, data.draw(arrays(float, m.n, elements=el)))
    val = pairing(duality_map(z, m) - duality_map(w, m), z - w, m)
    assert val >= -1e-12
    if v_norm(z - w, m) > 1e-3:
        assert val > 0


@settings(max_examples=100, deadline=None)
@given(metrics, st.data())
def test_c_V_embedding(m, data):
    z = _pinned(m, data.draw(arrays(float, m.n, elements=st.floats(-10, 10))))
    assert h_norm(z, m) <= m.c_V * v_norm(z, m) * (1 + 1e-12) + 1e-14


def test_dual_norm_p2_gradient_matches_stiffness_formula(rng):
    # for p = 2 the dual norm is sqrt(b' S^{-1} b) with S the interior
    # stiffness matrix (|w|_V^2 = w' S w) and b = M g
    for n in (4, 9, 17):
        m = SpaceMetric.interval(n, 2.0)
        g = rng.normal(size=n)
        b = (m.weights * g)[1:-1]
        k = n - 2
        S = (2 * np.eye(k) - np.eye(k, k=1) - np.eye(k, k=-1)) / m.mesh
        assert dual_norm(g, m) == pytest.approx(np.sqrt(b @ np.linalg.solve(S, b)), rel=1e-10)


@pytest.mark.parametrize("p", [3.0, 4.0])
def test_dual_norm_gradient_matches_convex_program(p, rng):
    m = SpaceMetric.interval(8, 1.0, p)
    g = rng.normal(size=8)
    w = cp.Variable(8)
    s = cp.diff(w) / m.mesh
    cons = [w[0] == 0, w[-1] == 0, cp.pnorm(m.mesh ** (1 / p) * s, p) <= 1]
    prob = cp.Problem(cp.Maximize((m.weights * g) @ w), cons)
    prob.solve(solver=cp.CLARABEL)
    assert dual_norm(g, m) == pytest.approx(prob.value, rel=1e-6)


def test_trajectory_norms():
    m = SpaceMetric.euclidean(2)
    g = TimeGrid(1.0, 4)
    traj = np.tile([3.0, 4.0], (5, 1))
    assert sup_h_norm(traj, m) == pytest.approx(5.0)
    assert lp_h_norm(traj, g, m) == pytest.approx(5.0)
