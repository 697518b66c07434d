"""Implicit-Euler catching-up solvers for constrained evolution inclusions,
and discrete checkers for the weak time-derivative inequality and its
consequences (contraction, energy, graph convergence)."""
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .constraints import trajectory_violation
from .exceptions import ConvergenceError, DimensionError, InfeasibleError
from .semimonotone import ZeroOperator
from .spaces import (SpaceMetric, TimeGrid, duality_map, h_inner, h_norm, lp_v_norm,
                     sup_h_norm)

PLAIN = "plain"
REGULARIZED = "duality-regularized"


@dataclass
class StepMode:
    """Per-step inclusion and inner-solver options.

    ``plain`` solves ``(z - u_prev)/tau + A(v; z) + N_K(z) ∋ f``; the
    ``duality-regularized`` mode adds ``reg_weight * F z``.  ``rho`` defaults
    to ``tau / (1 + tau * Lip_est)``.  ``init_seed`` randomizes the starting
    point of the inner iteration (the limit does not depend on it).
    """

    kind: str = PLAIN
    reg_weight: float = 1.0
    rho: Optional[float] = None
    tol_inner: float = 1e-11
    max_inner: int = 20_000
    init_seed: Optional[int] = None

    def __post_init__(self):
        if self.kind not in (PLAIN, REGULARIZED):
            raise ValueError(f"unknown step mode {self.kind!r}")
        if self.rho is not None and not self.rho > 0:
            raise ValueError("rho must be positive")
        if not self.tol_inner > 0:
            raise ValueError("tol_inner must be positive")
        if self.reg_weight < 0:
            raise ValueError("reg_weight must be nonnegative")

    @property
    def regularized(self):
        return self.kind == REGULARIZED


def estimate_lipschitz(fun, z0, metric: SpaceMetric, rng, iters=12, safety=1.5):
    """Sampled H-Lipschitz estimate of ``fun`` near ``z0`` (nonlinear power
    iteration on finite differences from a random start)."""
    base = fun(z0)
    scale = 1e-4 * (1.0 + np.max(np.abs(z0)))
    d = rng.normal(size=z0.shape)
    if metric.v_mode == "discrete-gradient":
        d[0] = d[-1] = 0.0
    est = 0.0
    for _ in range(iters):
        nd = h_norm(d, metric)
        if nd == 0:
            break
        d = d / nd * scale
        r = fun(z0 + d) - base
        nr = h_norm(r, metric)
        est = max(est, nr / scale)
        if nr == 0:
            break
        d = r
    return safety * est


def implicit_step(u_prev, t_next_index, theta, family, op, v_traj, f_next, mode: StepMode,
                  grid: TimeGrid, metric: SpaceMetric, workspace=None):
    """One implicit-Euler step: the discrete variational inequality

    ``( (z - u_prev)/tau + A(v;z) [+ F z] - f_next , w - z )_H >= 0`` for all
    ``w`` in ``K(theta; t_next)``, solved by the projected fixed-point
    iteration ``z <- P_K(z - rho * residual(z))``.
    """
    tau = grid.tau
    t = grid.nodes[t_next_index]
    u_prev = metric.check(u_prev, "previous state")
    f_next = metric.check(f_next, "forcing")
    op = ZeroOperator() if op is None else op
    v = None if v_traj is None else np.asarray(v_traj, float)[t_next_index]
    ws = {} if workspace is None else workspace

    def nonlinear(z):
        r = op.evaluate(v, z, t)
        if mode.regularized and mode.reg_weight:
            r = r + mode.reg_weight * duality_map(z, metric)
        return r

    def residual(z):
        return (z - u_prev) / tau + nonlinear(z) - f_next

    def proj(z):
        return family.project(theta, t_next_index, z, ws)

    start = u_prev + tau * f_next
    if mode.init_seed is not None:
        rng = np.random.default_rng(mode.init_seed + t_next_index)
        start = start + rng.normal(scale=0.1, size=start.shape)
    z = proj(start)
    if mode.rho is not None:
        rho = mode.rho
    else:
        lip = estimate_lipschitz(nonlinear, z, metric, np.random.default_rng(t_next_index))
        rho = tau / (1.0 + tau * lip)
    prev_change = np.inf
    change = np.inf
    for _ in range(mode.max_inner):
        z_new = proj(z - rho * residual(z))
        change = h_norm(z_new - z, metric)
        if change <= mode.tol_inner:
            return z_new
        if change > prev_change * (1 + 1e-9):
            # the step map must contract; a growing update means rho is too big
            rho *= 0.5
            prev_change = np.inf
            continue
        prev_change = change
        z = z_new
    raise ConvergenceError(
        f"inner iteration did not converge at node {t_next_index} "
        f"(last change {change:.3e})", residual=change, node=t_next_index)


def catching_up_solve(theta, family, op, v_traj, f, u0, mode: StepMode, grid: TimeGrid,
                      metric: SpaceMetric, u0_tol=1e-6):
    """Implicit catching-up scheme on the whole grid; returns ``(K+1, n)``."""
    f = np.asarray(f, float)
    if f.shape != (grid.K + 1, metric.n):
        raise DimensionError(f"forcing has shape {f.shape}, expected {(grid.K + 1, metric.n)}")
    u0 = metric.check(u0, "initial datum")
    viol = family.violation(theta, 0, u0)
    if viol > u0_tol:
        raise InfeasibleError("initial datum", 0, viol)
    u = np.empty((grid.K + 1, metric.n))
    u[0] = u0
    ws = {}
    for k in range(grid.K):
        try:
            u[k + 1] = implicit_step(u[k], k + 1, theta, family, op, v_traj, f[k + 1], mode,
                                     grid, metric, ws)
        except ConvergenceError as err:
            raise ConvergenceError(f"step {k + 1}: {err}", residual=err.residual, node=k + 1) from err
    return u


# --- residual checkers -------------------------------------------------------

def check_feasible(family, theta, traj, what, tol=1e-8, start=0, u0_tol=None):
    traj = np.asarray(traj, float)
    if u0_tol is not None and start == 0:
        v0 = family.violation(theta, 0, traj[0])
        if v0 > u0_tol:
            raise InfeasibleError(what, 0, v0)
        start = 1
    worst, node = trajectory_violation(family, theta, traj, start)
    if node is not None and worst > tol:
        raise InfeasibleError(what, node, worst)
    return worst


def weak_margins(u, g, theta, family, test_family, grid: TimeGrid, metric: SpaceMetric,
                 feas_tol=1e-8):
    """Per-test-function values of

    ``sum_k <eta'_k - g_k, u_k - eta_k> tau - |u_0 - eta_0|^2 / 2``

    with forward differences ``eta'_k``.  Nonpositive values (up to the
    discretization error) certify ``g in L_{u0}(theta; u)`` against the
    family.
    """
    u = np.asarray(u, float)
    g = np.asarray(g, float)
    shape = (grid.K + 1, metric.n)
    if u.shape != shape or g.shape != shape:
        raise DimensionError(f"u and g must have shape {shape}")
    check_feasible(family, theta, u, "solution u", feas_tol, u0_tol=1e-6)
    tau = grid.tau
    w = metric.weights
    out = []
    for j, eta in enumerate(test_family):
        eta = np.asarray(eta, float)
        if eta.shape != shape:
            raise DimensionError(f"test function {j} has shape {eta.shape}")
        check_feasible(family, theta, eta, f"test function {j}", feas_tol)
        deta = np.diff(eta, axis=0) / tau
        integral = tau * np.sum(((deta - g[:-1]) * (u[:-1] - eta[:-1])) @ w)
        d0 = u[0] - eta[0]
        out.append(float(integral - 0.5 * np.sum(w * d0 * d0)))
    return np.array(out)


def weak_residual(u, g, theta, family, test_family, grid, metric, feas_tol=1e-8) -> float:
    return float(np.max(weak_margins(u, g, theta, family, test_family, grid, metric, feas_tol)))


def contraction_check(u, u_bar, f, f_bar, s_index, t_index, grid: TimeGrid, metric: SpaceMetric):
    """``lhs - rhs`` of the monotonicity inequality between nodes s <= t:

    ``|u(t)-ub(t)|^2/2 - |u(s)-ub(s)|^2/2 - int_s^t <f - fb, u - ub>``.
    """
    if not 0 <= s_index <= t_index <= grid.K:
        raise IndexError(f"need 0 <= s <= t <= {grid.K}, got s={s_index}, t={t_index}")
    d = np.asarray(u, float) - np.asarray(u_bar, float)
    df = np.asarray(f, float) - np.asarray(f_bar, float)
    w = metric.weights
    lhs = 0.5 * np.sum(w * d[t_index] ** 2)
    rhs = 0.5 * np.sum(w * d[s_index] ** 2) + grid.tau * np.sum(
        (df[s_index:t_index] * d[s_index:t_index]) @ w)
    return float(lhs - rhs)


def contraction_sweep(u, u_bar, f, f_bar, grid, metric, n_points=20):
    """Largest contraction margin over an ``n_points x n_points`` index grid."""
    idx = np.unique(np.linspace(0, grid.K, n_points).round().astype(int))
    worst = -np.inf
    for s in idx:
        for t in idx[idx >= s]:
            worst = max(worst, contraction_check(u, u_bar, f, f_bar, s, t, grid, metric))
    return float(worst)


def step_monotonicity_margins(u, u_bar, f, f_bar, grid, metric):
    """Per-step ``|D_{k+1}|^2/2 - |D_k|^2/2 - <f_k - fb_k, D_{k+1}> tau``."""
    d = np.asarray(u, float) - np.asarray(u_bar, float)
    df = np.asarray(f, float) - np.asarray(f_bar, float)
    w = metric.weights
    sq = 0.5 * (d ** 2) @ w
    return sq[1:] - sq[:-1] - grid.tau * np.sum(df[:-1] * d[1:] * w, axis=1)


def energy_check(u, alpha, f, u0, grid: TimeGrid, metric: SpaceMetric, family=None, theta=None):
    """``max_t [ |u(t)|^2/2 + <<alpha - f, u>>_{(0,t)} - |u0|^2/2 ]``.

    Testing with ``eta = 0`` needs ``0 in K(theta; t)`` at every node; when a
    family is supplied and that fails, ``None`` is returned (not applicable).
    """
    u = np.asarray(u, float)
    if family is not None:
        zero = np.zeros(metric.n)
        if any(family.violation(theta, k, zero) > 1e-12 for k in range(grid.K + 1)):
            return None
    w = metric.weights
    integrand = np.sum((np.asarray(alpha, float) - np.asarray(f, float)) * u * w, axis=1)
    running = np.concatenate([[0.0], np.cumsum(integrand[:-1]) * grid.tau])
    energy = 0.5 * (u ** 2) @ w
    u0 = metric.check(u0)
    return float(np.max(energy + running - 0.5 * np.sum(w * u0 ** 2)))


def graph_convergence_probe(theta_seq, u0_seq, g, u, family, grid: TimeGrid, metric: SpaceMetric,
                            mode: StepMode = None):
    """Gaps between ``u`` (a solution of ``L(theta; u) ∋ g``) and the
    duality-regularized solutions with data ``(theta_n, u0_n, g + F u)``.

    Returns a list of ``(sup-H gap, L^p(V) gap)`` pairs.
    """
    mode = StepMode(kind=REGULARIZED) if mode is None else mode
    if not mode.regularized:
        raise ValueError("the probe uses the duality-regularized mode")
    u = np.asarray(u, float)
    forcing = np.asarray(g, float) + mode.reg_weight * np.array([duality_map(row, metric) for row in u])
    gaps = []
    for theta_n, u0_n in zip(theta_seq, u0_seq):
        un = catching_up_solve(theta_n, family, None, None, forcing, u0_n, mode, grid, metric)
        gaps.append((sup_h_norm(un - u, metric), lp_v_norm(un - u, grid, metric)))
    return gaps


def refinement_gaps(solve, K0, levels):
    """Sup-norm gaps between consecutive refinements.

    ``solve(K)`` returns a ``(K+1, n)`` trajectory on a grid with ``K``
    steps; level ``i`` uses ``K0 * 2**i`` steps and is compared with level
    ``i+1`` at the coarser level's nodes.
    """
    sols = [np.asarray(solve(K0 * 2 ** i), float) for i in range(levels)]
    return [float(np.max(np.abs(sols[i + 1][::2] - sols[i]))) for i in range(levels - 1)]


@dataclass
class ResidualReport:
    weak_residual: float = float("nan")
    weak_margins: List[float] = field(default_factory=list)
    feasibility_violation: float = float("nan")
    contraction_margins: List[float] = field(default_factory=list)
    theta_consistency: float = float("nan")
    fixed_point_gap: float = float("nan")
    test_family: str = ""

    def as_dict(self):
        return {
            "weak_residual": self.weak_residual,
            "weak_margins": list(map(float, self.weak_margins)),
            "feasibility_violation": self.feasibility_violation,
            "contraction_margins": list(map(float, self.contraction_margins)),
            "theta_consistency": self.theta_consistency,
            "fixed_point_gap": self.fixed_point_gap,
            "test_family": self.test_family,
        }
