import numpy as np
import pytest

from parqvi.constraints import CircleSegment, GradientBall, HalfLine
from parqvi.evolution import (StepMode, catching_up_solve, contraction_check, contraction_sweep,
                              energy_check, graph_convergence_probe, implicit_step,
                              step_monotonicity_margins, weak_margins, weak_residual)
from parqvi.exceptions import ConvergenceError, InfeasibleError
from parqvi.parameters import PdeParameter, PiecewiseLinear, ScalarParameter, SweepParameter
from parqvi.qvi import admissible_tests
from parqvi.semimonotone import PLaplacian, apply_trajectory
from parqvi.spaces import SpaceMetric, TimeGrid

M1 = SpaceMetric.euclidean(1)


def scalar_theta(grid, slope=0.0):
    return ScalarParameter(1 + slope * grid.nodes, grid)


def test_implicit_step_examples():
    g = TimeGrid(1.0, 10)
    th = scalar_theta(g)
    fam = HalfLine(0.5)  # K = [0.5, inf)
    z = implicit_step(np.zeros(1), 1, th, fam, None, None, np.zeros(1), StepMode(), g, M1)
    assert z[0] == pytest.approx(0.5, abs=1e-12)
    z = implicit_step(np.zeros(1), 1, th, fam, None, None, np.full(1, 10.0), StepMode(), g, M1)
    assert z[0] == pytest.approx(1.0, abs=1e-10)
    reg = StepMode(kind="duality-regularized")
    z = implicit_step(np.zeros(1), 1, th, fam, None, None, np.full(1, 10.0), reg, g, M1)
    # grid-search oracle for min (1/2tau)|z - tau f|^2 + z^2/2 over z >= 0.5
    zs = np.linspace(0.5, 2.0, 1_500_001)
    obj = (zs - 1.0) ** 2 / (2 * g.tau) + 0.5 * zs ** 2
    assert z[0] == pytest.approx(10 / 11, abs=1e-10)
    assert abs(z[0] - zs[np.argmin(obj)]) <= 2e-6


def test_moving_obstacle_sweeps_state():
    g = TimeGrid(1.0, 10)
    th = scalar_theta(g, 1.0)
    u = catching_up_solve(th, HalfLine(1.0), None, None, np.zeros((11, 1)), np.zeros(1),
                          StepMode(), g, M1)
    assert np.allclose(u[:, 0], g.nodes, atol=1e-12)
    u = catching_up_solve(th, HalfLine(2.0 + 1.0), None, None, np.zeros((11, 1)), np.zeros(1),
                          StepMode(), g, M1)
    assert np.all(u == 0)


def test_initial_datum_outside_set_is_an_error():
    g = TimeGrid(1.0, 4)
    with pytest.raises(InfeasibleError):
        catching_up_solve(scalar_theta(g), HalfLine(), None, None, np.zeros((5, 1)), np.zeros(1),
                          StepMode(), g, M1)


def seg_theta(grid, gamma=0.5):
    K1 = grid.K + 1
    a = np.tile([0.6, 0.8], (K1, 1))
    return SweepParameter(a, PiecewiseLinear.constant(gamma), np.tile([1.0, 0.0], (K1, 1)),
                          grid, 0.1, 1.0)


def test_segment_self_refinement():
    m = SpaceMetric.euclidean(2)

    def solve(K):
        g = TimeGrid(1.0, K)
        t = g.nodes
        f = np.stack([np.cos(3 * t), 2 * np.sin(4 * t)], 1)
        th = seg_theta(g)
        u = catching_up_solve(th, CircleSegment(), None, None, f, th.a[0], StepMode(), g, m)
        viol = max(CircleSegment().violation(th, k, u[k]) for k in range(K + 1))
        assert viol <= 1e-10
        return u

    ref = solve(50 * 16)
    gaps = [np.max(np.abs(solve(50 * r) - ref[::16 // r])) for r in (1, 2, 4)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 0.05


def test_weak_residual_examples():
    g = TimeGrid(1.0, 100)
    th = scalar_theta(g)
    u = np.ones((101, 1))
    assert weak_residual(u, np.zeros_like(u), th, HalfLine(), [u.copy()], g, M1) == 0
    for c in (0.25, 1.0):
        uc = (2 - np.exp(-c * g.nodes))[:, None]
        thc = ScalarParameter(uc[:, 0], g)
        tests = admissible_tests(HalfLine(), thc, uc, g, M1, 20)
        assert weak_residual(uc, np.zeros_like(uc), thc, HalfLine(), tests, g, M1) <= 5 * g.tau
    bad = u.copy()
    bad[30] = 0.5
    with pytest.raises(InfeasibleError) as err:
        weak_residual(bad, np.zeros_like(u), th, HalfLine(), [u], g, M1)
    assert err.value.node == 30


def test_contraction_examples():
    g = TimeGrid(1.0, 100)
    th = scalar_theta(g, 0.5)
    f = np.ones((101, 1))
    fb = np.zeros((101, 1))
    u = catching_up_solve(th, HalfLine(), None, None, f, np.ones(1), StepMode(), g, M1)
    ub = catching_up_solve(th, HalfLine(), None, None, fb, np.ones(1), StepMode(), g, M1)
    assert contraction_check(u, u, f, f, 3, 50, g, M1) == 0
    u2 = catching_up_solve(th, HalfLine(), None, None, f, np.ones(1), StepMode(init_seed=3), g, M1)
    assert np.max(np.abs(u - u2)) <= 1e-10
    assert contraction_sweep(u, ub, f, fb, g, M1, n_points=101) <= 5 * g.tau
    assert np.all(step_monotonicity_margins(u, ub, f, fb, g, M1) <= 5 * g.tau ** 2)
    with pytest.raises(IndexError):
        contraction_check(u, ub, f, fb, 10, 5, g, M1)


def pde_setup(n=17, K=50):
    m = SpaceMetric.interval(n, 1.0)
    g = TimeGrid(0.5, K)
    op = PLaplacian(lambda x, t, v: np.full_like(x, 0.05), m, 0.05, 0.05)
    th = PdeParameter(PiecewiseLinear.constant(1.0), np.zeros((K + 1, n)), g, 0.5)
    return m, g, op, th


def test_energy_decay_without_forcing():
    m, g, op, th = pde_setup()
    x = m.coordinates
    u0 = 0.3 * np.sin(np.pi * x)
    fam = GradientBall(m)
    u = catching_up_solve(th, fam, op, None, np.zeros((g.K + 1, m.n)), u0, StepMode(), g, m)
    e = 0.5 * (u ** 2) @ m.weights
    assert np.all(np.diff(e) <= 1e-14)
    assert energy_check(np.zeros_like(u), np.zeros_like(u), np.zeros_like(u), np.zeros(m.n), g, m) == 0


def test_energy_margin_with_forcing():
    m, g, op, th = pde_setup()
    fam = GradientBall(m)
    f = np.full((g.K + 1, m.n), 3.0)
    f[:, 0] = f[:, -1] = 0
    u = catching_up_solve(th, fam, op, None, f, np.zeros(m.n), StepMode(), g, m)
    alpha = apply_trajectory(op, None, u, g, m)
    assert energy_check(u, alpha, f, np.zeros(m.n), g, m, fam, th) <= 10 * g.tau
    # a half-line excluding 0 makes the eta = 0 test inadmissible
    gs = TimeGrid(1.0, 4)
    assert energy_check(np.ones((5, 1)), np.zeros((5, 1)), np.zeros((5, 1)), np.ones(1), gs, M1,
                        HalfLine(), scalar_theta(gs)) is None


def test_plain_limit_of_regularized():
    g = TimeGrid(1.0, 200)
    th = scalar_theta(g, 0.5)
    f = (np.sin(6 * g.nodes) + 0.5)[:, None]
    fam = HalfLine(0.5)
    plain = catching_up_solve(th, fam, None, None, f, np.ones(1), StepMode(), g, M1)
    gaps = []
    for lam in (1.0, 0.5, 0.25, 0.125):
        mode = StepMode(kind="duality-regularized", reg_weight=lam)
        gaps.append(np.max(np.abs(catching_up_solve(th, fam, None, None, f, np.ones(1), mode, g, M1)
                                  - plain)))
    assert all(b <= 1.1 * a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < gaps[0]


def test_graph_probe_constant_and_initial_perturbation():
    g = TimeGrid(1.0, 100)
    th = scalar_theta(g, 0.4)
    gf = (np.sin(5 * g.nodes) - 0.5)[:, None]
    fam = HalfLine()
    u = catching_up_solve(th, fam, None, None, gf, np.ones(1), StepMode(), g, M1)
    const = graph_convergence_probe([th] * 3, [np.ones(1)] * 3, gf, u, fam, g, M1)
    assert all(s <= 1e-10 and v <= 1e-10 for s, v in const)
    deltas = [2.0 ** -n for n in range(1, 5)]
    pert = graph_convergence_probe([th] * 4, [np.ones(1) + d for d in deltas], gf, u, fam, g, M1)
    for d, (s, _) in zip(deltas, pert):
        assert s <= d + 1e-10
    with pytest.raises(ValueError):
        graph_convergence_probe([th], [np.ones(1)], gf, u, fam, g, M1, StepMode())


def test_inner_iteration_cap_reports_node():
    m, g, op, th = pde_setup(K=5)
    f = np.full((g.K + 1, m.n), 3.0)
    with pytest.raises(ConvergenceError) as err:
        catching_up_solve(th, GradientBall(m), op, None, f, np.zeros(m.n), StepMode(max_inner=2), g, m)
    assert err.value.node == 1


def test_weak_margins_one_per_test():
    g = TimeGrid(1.0, 20)
    th = scalar_theta(g)
    u = np.ones((21, 1))
    tests = admissible_tests(HalfLine(), th, u, g, M1, 7)
    assert weak_margins(u, np.zeros_like(u), th, HalfLine(), tests, g, M1).shape == (7,)
