"""Feedback systems u -> theta.

* :class:`ScalarProjection` -- discrete L^2 projection onto the bounded-slope
  path set with ``z(0) = 1``.
* :class:`SweepDynamics` -- projected Euler for ``zeta' + N_Y(zeta) ∋ G(t, int u, zeta)``,
  direction field ``a = zeta / |zeta|``.
* :class:`HeatRobin` -- implicit Euler for ``zeta_t - zeta_xx = h(x, t, u)`` with
  the Robin condition ``d zeta/dn + n0 zeta = 0`` closed by ghost nodes.
"""
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import nnls

from .chain import chain_projection
from .exceptions import ConvergenceError, DimensionError, ParameterError
from .parameters import PdeParameter, PiecewiseLinear, ScalarParameter, SweepParameter, theta_distance
from .spaces import SpaceMetric, TimeGrid


# --- scalar projection ---------------------------------------------------------

@dataclass
class ScalarProjection:
    c0_slope: float = 1.0
    kkt_tol: float = 1e-9

    def __post_init__(self):
        if not self.c0_slope > 0:
            raise ValueError("c0_slope must be positive")

    def __call__(self, v, grid):
        return lambda_scalar(self, v, grid)


def _slope_constraints(K, tau, c0):
    """``G x >= h`` for ``x = (z_1..z_K)``: ``0 <= z_{k+1} - z_k <= c0 tau``, ``z_0 = 1``."""
    D = np.eye(K) - np.eye(K, k=-1)
    lower_h = np.zeros(K)
    lower_h[0] = 1.0
    delta = c0 * tau
    G = np.vstack([D, -D])
    h = np.concatenate([lower_h, -(delta + lower_h)])
    return G, h


def _chain_kkt_residual(x, v, start, delta):
    """KKT residual with multipliers recovered from stationarity."""
    lam = np.cumsum((x - v)[::-1])[::-1]
    d = np.diff(np.concatenate([[start], x]))
    primal = max(0.0, -d.min(), (d - delta).max())
    comp = max(np.max(np.maximum(lam, 0) * np.abs(d)), np.max(np.maximum(-lam, 0) * np.abs(delta - d)))
    return float(max(primal, comp))


def _ldp_projection(v, G, h):
    """Least-distance programming via NNLS (Lawson & Hanson), a dual active-set
    method.  Slow for long paths; used as the fallback."""
    hp = h - G @ v
    E = np.vstack([G.T, hp[None, :]])
    rhs = np.zeros(E.shape[0])
    rhs[-1] = 1.0
    u, _ = nnls(E, rhs, maxiter=50 * E.shape[1])
    r = E @ u - rhs
    if abs(r[-1]) < 1e-14:
        raise ConvergenceError("least-distance program reports an empty feasible set")
    return v - r[:-1] / r[-1]


def lambda_scalar(spec: ScalarProjection, v, grid: TimeGrid) -> ScalarParameter:
    """Exact minimizer of ``sum_k (z_k - v_k)^2 tau`` over admissible paths."""
    v = np.asarray(v, float).reshape(-1)
    if v.shape != (grid.K + 1,):
        raise DimensionError(f"scalar trajectory of length {grid.K + 1} expected, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise DimensionError("trajectory has non-finite entries")
    tau, c0 = grid.tau, spec.c0_slope
    delta = c0 * tau
    slopes = np.diff(v) / tau
    tol = 1e-12 * max(1.0, c0)
    if v[0] == 1.0 and slopes.min() >= -tol and slopes.max() <= c0 + tol:
        return ScalarParameter(v.copy(), grid, c0)
    target = v[1:]
    x = chain_projection(target, 1.0, 0.0, delta, 1.0)
    scale = 1.0 + np.max(np.abs(target))
    if _chain_kkt_residual(x, target, 1.0, delta) > spec.kkt_tol * scale:
        G, h = _slope_constraints(grid.K, tau, c0)
        x = _ldp_projection(target, G, h)
        res = _chain_kkt_residual(x, target, 1.0, delta)
        if res > spec.kkt_tol * scale:
            raise ConvergenceError(f"scalar projection KKT residual {res:.3e}", residual=res)
    # clean roundoff so the path passes the exact slope test
    d = np.clip(np.diff(np.concatenate([[1.0], x])), 0.0, delta)
    z = np.concatenate([[1.0], 1.0 + np.cumsum(d)])
    return ScalarParameter(z, grid, c0)


# --- sweep dynamics ------------------------------------------------------------

class HalfPlane:
    """``{x : normal . x >= offset}`` with ``offset > 0`` (so 0 is excluded)."""

    def __init__(self, normal, offset):
        n = np.asarray(normal, float)
        norm = np.linalg.norm(n)
        if norm == 0:
            raise ValueError("normal must be nonzero")
        self.normal = n / norm
        self.offset = float(offset) / norm
        if not self.offset > 0:
            raise ValueError("half-plane must not contain the origin")

    def project(self, x):
        s = self.normal @ x - self.offset
        return x if s >= 0 else x - s * self.normal

    def contains(self, x, tol=1e-12):
        return self.normal @ x - self.offset >= -tol

    @property
    def dist_origin(self):
        return self.offset


class Box:
    """Axis-aligned box ``[lo, hi]`` not containing the origin."""

    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, float)
        self.hi = np.asarray(hi, float)
        if np.any(self.lo > self.hi):
            raise ValueError("box needs lo <= hi")
        if self.dist_origin == 0:
            raise ValueError("box must not contain the origin")

    def project(self, x):
        return np.clip(x, self.lo, self.hi)

    def contains(self, x, tol=1e-12):
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    @property
    def dist_origin(self):
        return float(np.linalg.norm(np.clip(0.0, self.lo, self.hi)))


class AffineField:
    """``G(t, w, zeta) = clip(g0 + Gw w + Gz zeta, -gmax, gmax)``: bounded and
    Lipschitz with ``C_G = max(|Gw|, |Gz|)``."""

    def __init__(self, g0=(0.0, 0.0), gw=((0, 0), (0, 0)), gz=((0, 0), (0, 0)), gmax=10.0):
        self.g0 = np.asarray(g0, float)
        self.gw = np.asarray(gw, float).reshape(2, 2)
        self.gz = np.asarray(gz, float).reshape(2, 2)
        self.gmax = float(gmax)

    def __call__(self, t, w, zeta):
        return np.clip(self.g0 + self.gw @ w + self.gz @ zeta, -self.gmax, self.gmax)

    @property
    def lipschitz(self):
        return float(max(np.linalg.norm(self.gw, 2), np.linalg.norm(self.gz, 2)))


@dataclass
class SweepDynamics:
    G: Callable
    Y: object
    zeta0: np.ndarray
    gamma: PiecewiseLinear
    gamma_lo: float
    gamma_hi: float
    p: float = 2.0

    def __post_init__(self):
        self.zeta0 = np.asarray(self.zeta0, float)
        if self.Y.dist_origin <= 0:
            raise ParameterError("dist(0, Y) > 0")
        if not self.Y.contains(self.zeta0):
            raise ParameterError("zeta0 in Y", 0)

    def __call__(self, u, grid):
        return lambda_sweep(self, u, grid)

    @property
    def a0(self):
        return self.zeta0 / np.linalg.norm(self.zeta0)


def lambda_sweep(spec: SweepDynamics, u, grid: TimeGrid) -> SweepParameter:
    u = np.asarray(u, float)
    if u.shape != (grid.K + 1, 2):
        raise DimensionError(f"planar trajectory of shape {(grid.K + 1, 2)} expected, got {u.shape}")
    tau = grid.tau
    t = grid.nodes
    zeta = np.empty((grid.K + 1, 2))
    zeta[0] = spec.zeta0
    memory = np.zeros(2)
    for k in range(grid.K):
        zeta[k + 1] = spec.Y.project(zeta[k] + tau * spec.G(t[k], memory, zeta[k]))
        memory = memory + tau * u[k]
    a = zeta / np.linalg.norm(zeta, axis=1)[:, None]
    return SweepParameter(a, spec.gamma, zeta, grid, spec.gamma_lo, spec.gamma_hi, spec.p)


# --- heat feedback --------------------------------------------------------------

@dataclass
class HeatRobin:
    """Heat feedback on the spatial grid of ``metric`` (nodes ``0..L``)."""

    h_fn: Callable
    n0: float
    zeta0: np.ndarray
    gamma: PiecewiseLinear
    eps0: float
    metric: SpaceMetric
    compat_tol: float = 1e-8

    def __post_init__(self):
        self.zeta0 = np.broadcast_to(np.asarray(self.zeta0, float), (self.metric.n,)).copy()
        if self.n0 < 0:
            raise ParameterError("n0 >= 0")
        if self.metric.n < 3:
            raise ValueError("heat feedback needs at least 3 nodes")
        res = self.compatibility_residual()
        if res > self.compat_tol:
            raise ParameterError("d zeta0/dn + n0 zeta0 = 0", 0, f"residual {res:.3e}")

    def compatibility_residual(self):
        z, h = self.zeta0, self.metric.mesh
        left = (-3 * z[0] + 4 * z[1] - z[2]) / (2 * h)
        right = (3 * z[-1] - 4 * z[-2] + z[-3]) / (2 * h)
        return float(max(abs(-left + self.n0 * z[0]), abs(right + self.n0 * z[-1])))

    def __call__(self, u, grid):
        return lambda_pde(self, u, grid)

    def system_bands(self, tau):
        """Banded form of ``I/tau - Laplacian`` with the ghost-node closure."""
        n, h, n0 = self.metric.n, self.metric.mesh, self.n0
        main = np.full(n, 1 / tau + 2 / h ** 2)
        main[0] += 2 * n0 / h
        main[-1] += 2 * n0 / h
        upper = np.full(n - 1, -1 / h ** 2)
        lower = np.full(n - 1, -1 / h ** 2)
        upper[0] = -2 / h ** 2
        lower[-1] = -2 / h ** 2
        ab = np.zeros((3, n))
        ab[0, 1:] = upper
        ab[1] = main
        ab[2, :-1] = lower
        return ab


def heat_solve(spec: HeatRobin, u, grid: TimeGrid):
    """Temperature field ``(K+1, n)`` driven by the trajectory ``u``."""
    m = spec.metric
    u = np.asarray(u, float)
    if u.shape != (grid.K + 1, m.n):
        raise DimensionError(f"field trajectory of shape {(grid.K + 1, m.n)} expected, got {u.shape}")
    tau = grid.tau
    ab = spec.system_bands(tau)
    x = m.coordinates
    t = grid.nodes
    zeta = np.empty_like(u)
    zeta[0] = spec.zeta0
    for k in range(grid.K):
        rhs = zeta[k] / tau + spec.h_fn(x, t[k + 1], u[k + 1])
        zeta[k + 1] = solve_banded((1, 1), ab, rhs)
        if not np.all(np.isfinite(zeta[k + 1])):
            raise ConvergenceError("heat solve produced non-finite values", node=k + 1)
    return zeta


def lambda_pde(spec: HeatRobin, u, grid: TimeGrid) -> PdeParameter:
    return PdeParameter(spec.gamma, heat_solve(spec, u, grid), grid, spec.eps0)


def lambda_continuity_probe(spec, v_seq, v, grid: TimeGrid):
    """``d_Theta(Lambda v_n, Lambda v)`` for each ``v_n``."""
    base = spec(v, grid)
    return [theta_distance(spec(vn, grid), base) for vn in v_seq]
