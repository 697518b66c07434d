"""Semimonotone operators A(v; u): monotone in u for every frozen v.

Values are returned as H-Riesz vectors, like every dual object in the
package (see :mod:`parqvi.spaces`).  Each operator evaluates at a single
time node from ``v`` and ``u`` at that node only, so causality holds by
construction.
"""
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exceptions import DimensionError
from .spaces import SpaceMetric, TimeGrid, h_inner, h_norm, lp_v_norm, lq_dual_norm, pairing


class ZeroOperator:
    def evaluate(self, v, u, t):
        return np.zeros_like(np.asarray(u, float))

    def lipschitz(self, v, u, t):
        return 0.0

    def describe(self):
        return "A = 0"


class ScalarMonotone:
    """Nodewise ``u -> g(u)`` for a nondecreasing scalar function ``g``."""

    def __init__(self, g: Callable, probes=None):
        self.g = g
        probes = np.linspace(-10, 10, 2001) if probes is None else np.asarray(probes, float)
        vals = g(probes)
        if np.any(np.diff(vals) < -1e-12):
            raise ValueError("g is not nondecreasing on the probe set")

    def evaluate(self, v, u, t):
        return np.asarray(self.g(np.asarray(u, float)), float)

    def lipschitz(self, v, u, t):
        u = np.asarray(u, float)
        r = 1.0 + np.max(np.abs(u))
        x = np.linspace(-2 * r, 2 * r, 4001)
        return float(np.max(np.abs(np.diff(self.g(x)) / np.diff(x))))

    def describe(self):
        return "nodewise monotone g(u)"


class PLaplacian:
    """``-div(a(x, t, v) |grad u|^{p-2} grad u)`` on a 1-D Dirichlet grid.

    Flux differencing on edges with the edge coefficient taken as the mean
    of the two nodal coefficients.  The result is the H-gradient of the
    discrete energy ``sum_e a_e |s_e|^p h / p`` (``s_e`` the edge slopes).
    """

    def __init__(self, coef: Callable, metric: SpaceMetric, a_lo, a_hi, p=None, probes=None):
        if metric.v_mode != "discrete-gradient":
            raise ValueError("PLaplacian needs a discrete-gradient metric")
        if not 0 < a_lo <= a_hi:
            raise ValueError("need 0 < a_lo <= a_hi")
        self.coef = coef
        self.metric = metric
        self.p = metric.p if p is None else float(p)
        if self.p < 2:
            raise ValueError("p must be >= 2")
        self.a_lo = float(a_lo)
        self.a_hi = float(a_hi)
        x = metric.coordinates
        probes = np.linspace(-5, 5, 201) if probes is None else np.asarray(probes, float)
        for t in (0.0, 0.5, 1.0):
            for v in probes:
                a = np.asarray(coef(x, t, np.full(metric.n, v)), float)
                if np.any(a < self.a_lo - 1e-12) or np.any(a > self.a_hi + 1e-12):
                    raise ValueError(f"coefficient leaves [{a_lo}, {a_hi}] at t={t}, v={v}")

    def edge_coefficients(self, v, t):
        m = self.metric
        v = np.zeros(m.n) if v is None else np.asarray(v, float)
        a = np.broadcast_to(np.asarray(self.coef(m.coordinates, t, v), float), (m.n,))
        return 0.5 * (a[:-1] + a[1:])

    def fluxes(self, v, u, t):
        s = np.diff(u) / self.metric.mesh
        return self.edge_coefficients(v, t) * np.abs(s) ** (self.p - 2) * s

    def energy(self, v, u, t):
        u = self.metric.check(u)
        s = np.diff(u) / self.metric.mesh
        return float(np.sum(self.edge_coefficients(v, t) * np.abs(s) ** self.p)
                     * self.metric.mesh / self.p)

    def energy_gradient(self, v, u, t):
        """Euclidean gradient of :meth:`energy` in the nodal values."""
        u = self.metric.check(u)
        flux = self.fluxes(v, u, t)
        grad = np.zeros(self.metric.n)
        grad[:-1] -= flux
        grad[1:] += flux
        return grad

    def evaluate(self, v, u, t):
        u = self.metric.check(u)
        out = self.energy_gradient(v, u, t) / self.metric.weights
        out[0] = out[-1] = 0.0
        return out

    def lipschitz(self, v, u, t):
        """Local bound on the H-Lipschitz constant near ``u``."""
        m = self.metric
        s = np.abs(np.diff(np.asarray(u, float))) / m.mesh
        growth = (self.p - 1) * (1.0 + s.max()) ** (self.p - 2)
        return float(4 * self.a_hi * growth / (m.mesh * m.weights[1:-1].min()))

    def describe(self):
        return f"p-Laplacian (p={self.p:g}, a in [{self.a_lo:g}, {self.a_hi:g}])"


def apply(op, v_traj, u_traj, t_index, metric: SpaceMetric, grid: TimeGrid = None):
    """``A(v; u)`` at time node ``t_index``."""
    u_traj = np.asarray(u_traj, float)
    if u_traj.ndim != 2 or u_traj.shape[1] != metric.n:
        raise DimensionError(f"trajectory shape {u_traj.shape} does not match n={metric.n}")
    v = None
    if v_traj is not None:
        v_traj = np.asarray(v_traj, float)
        if v_traj.shape != u_traj.shape:
            raise DimensionError("v and u trajectories live on different grids")
        v = v_traj[t_index]
    t = 0.0 if grid is None else grid.nodes[t_index]
    return op.evaluate(v, u_traj[t_index], t)


def apply_trajectory(op, v_traj, u_traj, grid: TimeGrid, metric: SpaceMetric):
    return np.array([apply(op, v_traj, u_traj, k, metric, grid) for k in range(grid.K + 1)])


def _random_states(rng, metric, size, scale=1.0):
    x = rng.normal(scale=scale, size=(size, metric.n))
    if metric.v_mode == "discrete-gradient":
        x[:, 0] = x[:, -1] = 0.0
    return x


def monotonicity_probe(op, v, metric: SpaceMetric, n_samples=500, t=0.0, rng=None) -> float:
    """Smallest ``<A(v;u) - A(v;w), u - w>`` over random pairs."""
    rng = np.random.default_rng(0) if rng is None else rng
    us = _random_states(rng, metric, n_samples)
    ws = _random_states(rng, metric, n_samples)
    worst = np.inf
    for u, w in zip(us, ws):
        d = op.evaluate(v, u, t) - op.evaluate(v, w, t)
        worst = min(worst, pairing(d, u - w, metric))
    return float(worst)


@dataclass
class BoundProbe:
    passed: bool
    worst_ratio: float
    witness: np.ndarray


def bound_probe(op, v_traj, grid: TimeGrid, metric: SpaceMetric, a1, a2, n_samples=50, rng=None,
                scales=(0.1, 1.0, 10.0)) -> BoundProbe:
    """Sample the growth bound ``|A(v;w)|_{L^p'(V*)} <= a1 |w|^{p-1}_{L^p(V)} + a2``.

    ``worst_ratio`` is the largest ``lhs / rhs``; the witness is the
    trajectory attaining it.
    """
    rng = np.random.default_rng(1) if rng is None else rng
    p = metric.p
    worst, witness = -np.inf, None
    for i in range(n_samples):
        scale = scales[i % len(scales)]
        w = _random_states(rng, metric, grid.K + 1, scale)
        lhs = lq_dual_norm(apply_trajectory(op, v_traj, w, grid, metric), grid, metric)
        rhs = a1 * lp_v_norm(w, grid, metric) ** (p - 1) + a2
        ratio = lhs / rhs if rhs > 0 else (np.inf if lhs > 0 else 0.0)
        if ratio > worst:
            worst, witness = ratio, w
    return BoundProbe(passed=bool(worst <= 1.0), worst_ratio=float(worst), witness=witness)


def linear_operator_norm(op, v, metric: SpaceMetric, t=0.0, iters=200):
    """``sup |A(v;w)|_{V*} / |w|_V`` for a linear (p = 2) gradient-mode operator.

    Power iteration on ``S^{-1} A_s S^{-1} A_s`` where ``S`` is the unit
    stiffness matrix (so ``|w|_V^2 = w' S w``) and ``A_s`` the stiffness of
    the operator.
    """
    if metric.v_mode != "discrete-gradient" or metric.p != 2:
        raise ValueError("power iteration implemented for p = 2 gradient metrics")
    n = metric.n - 2
    basis = np.eye(metric.n)[:, 1:-1]
    As = np.array([op.energy_gradient(v, basis[:, j], t)[1:-1] for j in range(n)]).T
    S = (np.diag(np.full(n, 2.0)) - np.diag(np.ones(n - 1), 1) - np.diag(np.ones(n - 1), -1)) / metric.mesh
    x = np.ones(n)
    lam = 0.0
    for _ in range(iters):
        y = np.linalg.solve(S, As @ np.linalg.solve(S, As @ x))
        lam = float(x @ (S @ y)) / float(x @ (S @ x))
        x = y / np.sqrt(y @ (S @ y))
    return float(np.sqrt(lam))


def coercivity_margin(op, v_traj, grid: TimeGrid, metric: SpaceMetric, a3, a4, n_samples=100, rng=None):
    """Smallest ``<<A(v;w), w>> - (a3 |w|^p_{L^p(V)} - a4)`` over samples."""
    rng = np.random.default_rng(2) if rng is None else rng
    worst = np.inf
    for _ in range(n_samples):
        w = _random_states(rng, metric, grid.K + 1, rng.uniform(0.1, 3.0))
        aw = apply_trajectory(op, v_traj, w, grid, metric)
        lhs = grid.tau * sum(pairing(aw[k], w[k], metric) for k in range(grid.K))
        rhs = a3 * lp_v_norm(w, grid, metric) ** metric.p - a4
        worst = min(worst, lhs - rhs)
    return float(worst)


def growth_constants(op, v_traj, grid: TimeGrid, metric: SpaceMetric, n_samples=20, rng=None):
    """Measured ``a1`` (growth) and ``a3`` (coercivity) over random trajectories,
    with ``a2 = a4 = 0``; operators here are positively homogeneous so the
    offsets are not needed."""
    rng = np.random.default_rng(3) if rng is None else rng
    p = metric.p
    a1, a3 = 0.0, np.inf
    for _ in range(n_samples):
        w = _random_states(rng, metric, grid.K + 1, rng.uniform(0.1, 3.0))
        aw = apply_trajectory(op, v_traj, w, grid, metric)
        nw = lp_v_norm(w, grid, metric)
        if nw == 0:
            continue
        a1 = max(a1, lq_dual_norm(aw, grid, metric) / nw ** (p - 1))
        inner = grid.tau * sum(pairing(aw[k], w[k], metric) for k in range(grid.K))
        a3 = min(a3, inner / nw ** p)
    return {"a1": float(a1), "a2": 0.0, "a3": float(a3 if np.isfinite(a3) else 0.0), "a4": 0.0}
