"""Outer fixed-point driver for the quasi-variational problem

    L_{u0}(theta; u) + A(u; u) ∋ f,   theta = Lambda_{u0} u,

plus a multi-seed explorer for problems with many solutions.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .constraints import CircleSegment, GradientBall, HalfLine, project_trajectory, trajectory_violation
from .evolution import (ResidualReport, StepMode, catching_up_solve, weak_margins)
from .exceptions import ConvergenceError, DimensionError, InfeasibleError
from .parameters import theta_distance
from .semimonotone import ZeroOperator, apply_trajectory
from .spaces import SpaceMetric, TimeGrid, lp_h_norm


@dataclass
class QviProblem:
    feedback: Callable
    operator: object
    family: object
    f: np.ndarray
    u0: np.ndarray
    grid: TimeGrid
    metric: SpaceMetric
    mode: StepMode = field(default_factory=StepMode)
    tol_fix: float = 1e-10
    max_outer: int = 100
    damping: float = 1.0
    tol_weak: Optional[float] = None
    theta_tol: float = 1e-6
    n_tests: int = 20
    test_family: Optional[Callable] = None

    def __post_init__(self):
        self.operator = ZeroOperator() if self.operator is None else self.operator
        self.f = np.asarray(self.f, float)
        shape = (self.grid.K + 1, self.metric.n)
        if self.f.shape != shape:
            raise DimensionError(f"forcing has shape {self.f.shape}, expected {shape}")
        self.u0 = self.metric.check(self.u0, "initial datum")
        if self.tol_fix < 0:
            raise ValueError("tol_fix must be nonnegative")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.max_outer < 1:
            raise ValueError("max_outer must be positive")

    @property
    def weak_tolerance(self):
        return 10 * self.grid.tau if self.tol_weak is None else self.tol_weak


@dataclass
class QviSolution:
    u: np.ndarray
    theta: object
    history: List[float]
    converged: bool
    damping: float
    report: ResidualReport = field(default_factory=ResidualReport)
    certified: Optional[bool] = None
    failures: List[str] = field(default_factory=list)

    @property
    def iterations(self):
        return len(self.history)


def fixed_point_solve(problem: QviProblem, seed, certify_result=True) -> QviSolution:
    """Picard iteration ``u <- (1 - w) u + w S(u)`` where ``S(u)`` solves the
    evolution inclusion with ``theta = Lambda(u)`` and ``A(u; .)`` frozen.

    Non-convergence is reported through ``converged = False``; inner solver
    failures propagate with the outer iteration index attached.
    """
    pb = problem
    grid, metric = pb.grid, pb.metric
    u = np.asarray(seed, float)
    if u.shape != (grid.K + 1, metric.n):
        raise DimensionError(f"seed has shape {u.shape}, expected {(grid.K + 1, metric.n)}")
    u = project_trajectory(pb.family, pb.feedback(u, grid), u)
    omega = pb.damping
    history = []
    theta, u_half = None, u
    converged = False
    for m in range(pb.max_outer):
        theta = pb.feedback(u, grid)
        try:
            u_half = catching_up_solve(theta, pb.family, pb.operator, u, pb.f, pb.u0, pb.mode,
                                       grid, metric)
        except ConvergenceError as err:
            raise ConvergenceError(f"outer iteration {m}: {err}", residual=err.residual,
                                   node=err.node) from err
        gap = omega * lp_h_norm(u_half - u, grid, metric)
        history.append(gap)
        if gap <= pb.tol_fix:
            converged = True
            break
        if omega > 0.5 and len(history) >= 4 and all(
                history[-i] >= history[-i - 1] for i in (1, 2, 3)):
            omega = 0.5
        u = (1 - omega) * u + omega * u_half
    sol = QviSolution(u=u_half, theta=theta, history=history, converged=converged, damping=omega)
    if certify_result:
        certify(pb, sol)
    return sol


def admissible_tests(family, theta, u, grid: TimeGrid, metric: SpaceMetric, n=20):
    """``n`` admissible test trajectories built around ``u``.

    Each member is ``(1 - lam(t)) u + lam(t) w(t)`` with ``w`` a smooth path
    inside ``K(theta; t)`` and ``lam`` a smooth weight in ``[0, 1]``; both
    pieces are admissible so every member is too.  Member 0 is ``u``.
    """
    u = np.asarray(u, float)
    t = grid.nodes / grid.T
    out = [u.copy()]
    for j in range(1, n):
        if j % 2:
            amp = 0.25 + 0.375 * (j % 3)
            lam = amp * 0.5 * (1 - np.cos(np.pi * (1 + j % 4) * t))
        else:
            lam = np.full_like(t, 0.2 + 0.15 * (j % 5))
        w = _feasible_path(family, theta, j, grid, metric)
        out.append((1 - lam)[:, None] * u + lam[:, None] * w)
    return out


def _feasible_path(family, theta, j, grid, metric):
    t = grid.nodes / grid.T
    phase = 2 * np.pi * (j / 7.0)
    s = np.sin(np.pi * (1 + j % 3) * t + phase)
    if isinstance(family, HalfLine):
        bump = 0.5 * (1 + s) * (1 + j % 4) / 4
        return np.repeat((theta.z - family.offset + bump)[:, None], metric.n, axis=1)
    if isinstance(family, CircleSegment):
        a = theta.a
        perp = np.stack([-a[:, 1], a[:, 0]], axis=1)
        r = theta.radii()
        return a + (r * s * 0.9)[:, None] * perp
    if isinstance(family, GradientBall):
        L = (metric.n - 1) * metric.mesh
        x = metric.coordinates
        # slopes bounded by eps0 * |s|, inside every gamma >= eps0
        if j % 2:
            shape = (L / np.pi) * np.sin(np.pi * x / L)
        else:
            shape = np.minimum(x, L - x)
        shape = shape * (1 - 1e-9)
        return (theta.eps0 * s)[:, None] * shape[None, :]
    raise TypeError(f"no test family for {type(family).__name__}")


def certify(problem: QviProblem, sol: QviSolution, feas_tol=1e-8):
    """Fill ``sol.report`` and set ``sol.certified``.

    Checks feasibility, fixed-point gap, theta-consistency and the weak
    residual against the problem's test family.
    """
    pb = problem
    grid, metric = pb.grid, pb.metric
    rep = ResidualReport()
    failures = []
    viol, node = trajectory_violation(pb.family, sol.theta, sol.u, 1)
    rep.feasibility_violation = viol
    if viol > feas_tol:
        failures.append(f"feasibility: violation {viol:.3e} at node {node}")
    rep.fixed_point_gap = sol.history[-1] if sol.history else float("nan")
    if not sol.converged:
        failures.append(f"fixed point: gap {rep.fixed_point_gap:.3e} > tol {pb.tol_fix:.3e}")
    rep.theta_consistency = theta_distance(pb.feedback(sol.u, grid), sol.theta)
    if rep.theta_consistency > pb.theta_tol:
        failures.append(f"theta consistency: {rep.theta_consistency:.3e}")
    g = pb.f - apply_trajectory(pb.operator, sol.u, sol.u, grid, metric)
    tests = (pb.test_family or admissible_tests)(pb.family, sol.theta, sol.u, grid, metric, pb.n_tests)
    try:
        margins = weak_margins(sol.u, g, sol.theta, pb.family, tests, grid, metric, feas_tol)
        rep.weak_margins = margins.tolist()
        rep.weak_residual = float(np.max(margins))
        if rep.weak_residual > pb.weak_tolerance:
            failures.append(f"weak residual {rep.weak_residual:.3e} > {pb.weak_tolerance:.3e}")
    except InfeasibleError as err:
        failures.append(f"weak residual: {err}")
    rep.test_family = f"{len(tests)} convex combinations of u with smooth admissible paths"
    sol.report = rep
    sol.failures = failures
    sol.certified = not failures
    return sol.certified


@dataclass
class Exploration:
    solutions: List[QviSolution]
    clusters: List[List[int]]
    representatives: List[int]
    separation: float

    @property
    def n_clusters(self):
        return len(self.clusters)


def cluster_solutions(trajs, cluster_tol=0.05):
    """Greedy clustering by sup-norm distance to each cluster's first member."""
    clusters, reps = [], []
    for i, u in enumerate(trajs):
        for c, r in zip(clusters, reps):
            if np.max(np.abs(u - trajs[r])) <= cluster_tol:
                c.append(i)
                break
        else:
            clusters.append([i])
            reps.append(i)
    sep = np.inf
    for a in range(len(reps)):
        for b in range(a + 1, len(reps)):
            sep = min(sep, float(np.max(np.abs(trajs[reps[a]] - trajs[reps[b]]))))
    return clusters, reps, float(sep)


def multi_seed_explore(problem: QviProblem, seeds, cluster_tol=0.05, workers=1) -> Exploration:
    """Solve from every seed and cluster the converged solutions.

    Seeds may run in parallel; results are merged by seed index.
    """
    seeds = list(seeds)
    if len(seeds) < 2:
        raise ValueError("need at least two seeds")
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            sols = list(pool.map(lambda s: fixed_point_solve(problem, s), seeds))
    else:
        sols = [fixed_point_solve(problem, s) for s in seeds]
    idx = [i for i, s in enumerate(sols) if s.converged]
    clusters, reps, sep = cluster_solutions([sols[i].u for i in idx], cluster_tol)
    clusters = [[idx[i] for i in c] for c in clusters]
    reps = [idx[i] for i in reps]
    return Exploration(solutions=sols, clusters=clusters, representatives=reps, separation=sep)
