"""Finite-dimensional realizations of the spaces H, V and V*.

States are 1-D numpy arrays of length ``n``.  Dual objects (forcing terms,
operator values, duality-map images) are stored as H-Riesz representatives:
the pairing of a dual vector ``g`` with a state ``w`` is ``h_inner(g, w)``.
Trajectories are arrays of shape ``(K + 1, n)``, one row per time node.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .exceptions import DimensionError

SAME_AS_H = "same-as-H"
GRADIENT = "discrete-gradient"


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of ``[0, T]`` into ``K`` steps."""

    T: float
    K: int

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise ValueError(f"horizon must be positive, got {self.T}")
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"step count must be a positive integer, got {self.K}")
        object.__setattr__(self, "K", int(self.K))

    @property
    def tau(self) -> float:
        return self.T / self.K

    @property
    def nodes(self) -> np.ndarray:
        t = np.arange(self.K + 1) * self.tau
        t[-1] = self.T
        return t

    def refine(self, factor=2):
        return TimeGrid(self.T, self.K * factor)


@dataclass(frozen=True)
class SpaceMetric:
    """Quadrature-weighted realization of H and V on ``n`` coordinates.

    In ``same-as-H`` mode ``|x|_V`` is the weighted l^p norm of the
    coordinates.  In ``discrete-gradient`` mode the coordinates are nodal
    values on a uniform 1-D grid of width ``mesh`` whose two end nodes carry
    the homogeneous Dirichlet condition, and ``|x|_V`` is the l^p norm of the
    forward difference quotients (one per edge, quadrature weight ``mesh``).
    """

    n: int
    p: float = 2.0
    weights: np.ndarray = field(default=None)
    v_mode: str = SAME_AS_H
    mesh: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("dimension must be positive")
        if not (self.p >= 2 and np.isfinite(self.p)):
            raise ValueError(f"exponent p must satisfy 2 <= p < inf, got {self.p}")
        w = np.ones(self.n) if self.weights is None else np.asarray(self.weights, float)
        if w.shape != (self.n,) or np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be n positive finite reals")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if self.v_mode not in (SAME_AS_H, GRADIENT):
            raise ValueError(f"unknown v_mode {self.v_mode!r}")
        if self.v_mode == GRADIENT and (self.n < 2 or self.mesh <= 0):
            raise ValueError("gradient mode needs n >= 2 and a positive mesh width")

    @classmethod
    def euclidean(cls, n, p=2.0):
        return cls(n=n, p=p)

    @classmethod
    def interval(cls, n_nodes, length=1.0, p=2.0):
        """Gradient-mode metric on ``n_nodes`` equispaced nodes of ``[0, length]``
        with trapezoidal H weights."""
        h = length / (n_nodes - 1)
        w = np.full(n_nodes, h)
        w[0] = w[-1] = h / 2
        return cls(n=n_nodes, p=p, weights=w, v_mode=GRADIENT, mesh=h)

    @property
    def conjugate(self) -> float:
        return self.p / (self.p - 1)

    @property
    def coordinates(self) -> np.ndarray:
        """Node positions in gradient mode (``0, h, 2h, ...``)."""
        return np.arange(self.n) * self.mesh

    @property
    def c_V(self) -> float:
        """A constant with ``h_norm(z) <= c_V * v_norm(z)`` for all ``z``."""
        total = float(self.weights.sum())
        if self.v_mode == SAME_AS_H:
            # Hoelder on the weighted sums
            return total ** (0.5 - 1.0 / self.p)
        # |z_i| <= half the total variation when both ends are pinned at 0
        length = (self.n - 1) * self.mesh
        return 0.5 * np.sqrt(total) * length ** (1.0 / self.conjugate)

    def check(self, x, what="state"):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise DimensionError(f"{what} has shape {x.shape}, expected ({self.n},)")
        return x


def h_inner(x, y, m: SpaceMetric) -> float:
    x = m.check(x)
    y = m.check(y)
    return float(np.sum(m.weights * x * y))


def h_norm(x, m: SpaceMetric) -> float:
    return float(np.sqrt(h_inner(x, x, m)))


def pairing(g, w, m: SpaceMetric) -> float:
    """Duality pairing <g, w> of a dual vector with a state."""
    return h_inner(g, w, m)


def edge_slopes(x, m: SpaceMetric) -> np.ndarray:
    return np.diff(x) / m.mesh


def v_norm(x, m: SpaceMetric) -> float:
    x = m.check(x)
    p = m.p
    if m.v_mode == SAME_AS_H:
        return float(np.sum(m.weights * np.abs(x) ** p) ** (1.0 / p))
    s = edge_slopes(x, m)
    return float(np.sum(m.mesh * np.abs(s) ** p) ** (1.0 / p))


def duality_map(z, m: SpaceMetric) -> np.ndarray:
    """Duality map with gauge ``r -> r**(p-1)``, as an H-Riesz vector.

    It is the H-gradient of ``|z|_V**p / p``: nodewise ``|z|^(p-2) z`` in
    ``same-as-H`` mode, the unit-coefficient discrete p-Laplacian in
    ``discrete-gradient`` mode (zero at the pinned end nodes).
    """
    z = m.check(z)
    p = m.p
    if m.v_mode == SAME_AS_H:
        return np.abs(z) ** (p - 2) * z
    s = edge_slopes(z, m)
    flux = np.abs(s) ** (p - 2) * s
    grad = np.zeros(m.n)
    grad[:-1] -= flux
    grad[1:] += flux
    out = grad / m.weights
    out[0] = out[-1] = 0.0
    return out


def dual_norm(g, m: SpaceMetric) -> float:
    """``sup { <g, w> : |w|_V <= 1 }``."""
    g = m.check(g, "dual vector")
    q = m.conjugate
    if m.v_mode == SAME_AS_H:
        return float(np.sum(m.weights * np.abs(g) ** q) ** (1.0 / q))
    # <g, w> = sum_j e_j * tail_j over edge increments e_j with sum(e) = 0,
    # so the supremum is min_c of the weighted l^q norm of (tail - c).
    mg = m.weights * g
    mg[0] = mg[-1] = 0.0
    tail = np.cumsum(mg[::-1])[::-1][1:]
    h = m.mesh
    lo, hi = tail.min(), tail.max()
    if hi - lo <= 1e-300:
        c = lo
    else:
        def slope(c):
            d = tail - c
            return np.sum(h * np.abs(d) ** (q - 1) * np.sign(d))

        # absolute tolerance relative to the bracket: the root may sit at c = 0
        c = brentq(slope, lo, hi, xtol=1e-15 * (hi - lo), rtol=1e-15, maxiter=500)
    return float(np.sum(h * np.abs(tail - c) ** q) ** (1.0 / q))


def time_pairing(g, w, grid: TimeGrid, m: SpaceMetric) -> float:
    """Left-endpoint rule for the time-integrated pairing ``<<g, w>>``."""
    g = np.asarray(g, float)
    w = np.asarray(w, float)
    shape = (grid.K + 1, m.n)
    if g.shape != shape or w.shape != shape:
        raise DimensionError(f"trajectories must have shape {shape}, got {g.shape} and {w.shape}")
    return float(np.sum((g[:-1] * w[:-1]) @ m.weights) * grid.tau)


def sup_h_norm(traj, m: SpaceMetric) -> float:
    """Discrete ``C([0,T]; H)`` norm."""
    traj = np.asarray(traj, float)
    return float(np.sqrt(np.max((traj ** 2) @ m.weights)))


def lp_h_norm(traj, grid: TimeGrid, m: SpaceMetric) -> float:
    """Discrete ``L^p(0,T; H)`` norm (left rule)."""
    traj = np.asarray(traj, float)
    hn = np.sqrt((traj[:-1] ** 2) @ m.weights)
    return float((grid.tau * np.sum(hn ** m.p)) ** (1.0 / m.p))


def lp_v_norm(traj, grid: TimeGrid, m: SpaceMetric) -> float:
    """Discrete ``L^p(0,T; V)`` norm (left rule)."""
    traj = np.asarray(traj, float)
    vn = np.array([v_norm(row, m) for row in traj[:-1]])
    return float((grid.tau * np.sum(vn ** m.p)) ** (1.0 / m.p))


def lq_dual_norm(traj, grid: TimeGrid, m: SpaceMetric) -> float:
    """Discrete ``L^{p'}(0,T; V*)`` norm (left rule)."""
    traj = np.asarray(traj, float)
    dn = np.array([dual_norm(row, m) for row in traj[:-1]])
    q = m.conjugate
    return float((grid.tau * np.sum(dn ** q)) ** (1.0 / q))
