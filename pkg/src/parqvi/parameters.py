"""Feedback parameters: the three variants of the metric space Theta."""
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ParameterError, VariantMismatch
from .spaces import TimeGrid


class PiecewiseLinear:
    """Piecewise-linear table with constant extrapolation.

    Used for obstacle profiles gamma and coefficient tables.  Constant
    extrapolation keeps the function bounded with limits at +-infinity, and
    the sup-distance between two tables is attained at a knot of either one,
    so :func:`table_sup_distance` is exact.
    """

    def __init__(self, knots, values):
        knots = np.atleast_1d(np.asarray(knots, float))
        values = np.atleast_1d(np.asarray(values, float))
        if knots.shape != values.shape or knots.ndim != 1 or knots.size == 0:
            raise ValueError("knots and values must be equal-length 1-D sequences")
        if np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        if not (np.all(np.isfinite(knots)) and np.all(np.isfinite(values))):
            raise ValueError("table entries must be finite")
        self.knots = knots
        self.values = values

    @classmethod
    def constant(cls, value):
        return cls([0.0], [value])

    def __call__(self, x):
        return np.interp(x, self.knots, self.values)

    @property
    def lower(self):
        return float(self.values.min())

    @property
    def upper(self):
        return float(self.values.max())

    @property
    def lipschitz(self):
        if self.knots.size < 2:
            return 0.0
        return float(np.max(np.abs(np.diff(self.values) / np.diff(self.knots))))

    def shifted(self, delta):
        return PiecewiseLinear(self.knots, self.values + delta)

    def __eq__(self, other):
        return (isinstance(other, PiecewiseLinear)
                and np.array_equal(self.knots, other.knots)
                and np.array_equal(self.values, other.values))

    def __repr__(self):
        return f"PiecewiseLinear(knots={self.knots.tolist()}, values={self.values.tolist()})"


def table_sup_distance(g1, g2, probes=None, nonnegative=False):
    pts = np.union1d(g1.knots, g2.knots)
    if probes is not None:
        pts = np.union1d(pts, np.asarray(probes, float))
    if nonnegative:
        # radial profiles only see r >= 0
        pts = np.union1d(np.clip(pts, 0.0, None), [0.0])
    return float(np.max(np.abs(g1(pts) - g2(pts))))


@dataclass(eq=False)
class ScalarParameter:
    """Path ``z`` in the discrete analog of ``X_0``: ``z(0) = 1`` and
    ``0 <= z' <= c0_slope`` on every step."""

    z: np.ndarray
    grid: TimeGrid
    c0_slope: float = 1.0
    slope_tol: float = 1e-9

    def __post_init__(self):
        self.z = np.asarray(self.z, float).reshape(-1)
        if self.z.shape != (self.grid.K + 1,):
            raise ParameterError("len(z) = K + 1", None, f"got {self.z.size}")
        if not self.c0_slope > 0:
            raise ParameterError("c0_slope > 0")
        bad = np.flatnonzero(~np.isfinite(self.z))
        if bad.size:
            raise ParameterError("z finite", int(bad[0]))
        if abs(self.z[0] - 1.0) > 1e-12:
            raise ParameterError("z(0) = 1", 0, f"z(0) = {self.z[0]!r}")
        slopes = np.diff(self.z) / self.grid.tau
        tol = self.slope_tol * max(1.0, self.c0_slope)
        low = np.flatnonzero(slopes < -tol)
        if low.size:
            raise ParameterError("0 <= z'", int(low[0]), f"slope {slopes[low[0]]:.3e}")
        high = np.flatnonzero(slopes > self.c0_slope + tol)
        if high.size:
            raise ParameterError("z' <= c0_slope", int(high[0]), f"slope {slopes[high[0]]:.6g}")


@dataclass(eq=False)
class SweepParameter:
    """Triple ``[a, gamma, zeta]`` of the planar sweeping application.

    ``a`` and ``zeta`` are ``(K + 1, 2)`` arrays; ``gamma`` is a radial
    obstacle profile, evaluated at ``|zeta|``, bounded between ``gamma_lo``
    and ``gamma_hi``.
    """

    a: np.ndarray
    gamma: PiecewiseLinear
    zeta: np.ndarray
    grid: TimeGrid
    gamma_lo: float
    gamma_hi: float
    p: float = 2.0
    unit_tol: float = 1e-10

    def __post_init__(self):
        K1 = self.grid.K + 1
        self.a = np.asarray(self.a, float)
        self.zeta = np.asarray(self.zeta, float)
        if self.a.shape != (K1, 2):
            raise ParameterError("a has shape (K+1, 2)", None, f"got {self.a.shape}")
        if self.zeta.shape != (K1, 2):
            raise ParameterError("zeta has shape (K+1, 2)", None, f"got {self.zeta.shape}")
        for name, arr in (("a", self.a), ("zeta", self.zeta)):
            bad = np.flatnonzero(~np.all(np.isfinite(arr), axis=1))
            if bad.size:
                raise ParameterError(f"{name} finite", int(bad[0]))
        norms = np.linalg.norm(self.a, axis=1)
        bad = np.flatnonzero(np.abs(norms - 1.0) > self.unit_tol)
        if bad.size:
            raise ParameterError("|a(t)| = 1", int(bad[0]), f"|a| = {norms[bad[0]]:.12g}")
        if not 0 < self.gamma_lo < self.gamma_hi:
            raise ParameterError("0 < gamma_lo < gamma_hi")
        if self.gamma.lower < self.gamma_lo or self.gamma.upper > self.gamma_hi:
            raise ParameterError(
                "gamma_lo <= gamma <= gamma_hi", None,
                f"table range [{self.gamma.lower}, {self.gamma.upper}]")

    def radius(self, k):
        return float(self.gamma(np.linalg.norm(self.zeta[k])))

    def radii(self):
        return self.gamma(np.linalg.norm(self.zeta, axis=1))

    def sobolev_norm_a(self):
        """Measured discrete ``W^{1,p}`` norm of ``a`` (recorded, not capped)."""
        return _w1p_norm(self.a, self.grid, self.p)


@dataclass(eq=False)
class PdeParameter:
    """Pair ``[gamma, zeta]``: obstacle profile and nodal temperature field."""

    gamma: PiecewiseLinear
    zeta: np.ndarray
    grid: TimeGrid
    eps0: float

    def __post_init__(self):
        self.zeta = np.asarray(self.zeta, float)
        if self.zeta.ndim != 2 or self.zeta.shape[0] != self.grid.K + 1:
            raise ParameterError("zeta has shape (K+1, n)", None, f"got {self.zeta.shape}")
        if not self.eps0 > 0:
            raise ParameterError("eps0 > 0")
        bad = np.argwhere(~np.isfinite(self.zeta))
        if bad.size:
            raise ParameterError("zeta finite", int(bad[0, 0]))
        if self.gamma.lower < self.eps0:
            # tables attain their extremes at knots, so this is exact
            raise ParameterError("gamma >= eps0", None, f"min gamma = {self.gamma.lower}")
        g = self.gamma(self.zeta)
        bad = np.argwhere(g < self.eps0)
        if bad.size:
            raise ParameterError("gamma(zeta) >= eps0", int(bad[0, 0]))

    def bounds(self, k):
        return self.gamma(self.zeta[k])


def _w1p_norm(arr, grid, p):
    tau = grid.tau
    vals = np.linalg.norm(arr[:-1], axis=1) ** p
    ders = np.linalg.norm(np.diff(arr, axis=0) / tau, axis=1) ** p
    return float((tau * (vals.sum() + ders.sum())) ** (1.0 / p))


def theta_distance(theta, theta_bar, probes=None) -> float:
    """Metric on Theta for matching parameter variants.

    * scalar: sup over nodes of ``|z - z_bar|``;
    * sweep: discrete ``W^{1,p}`` norm of ``a - a_bar`` plus sup of the gamma
      difference plus sup over nodes of ``|zeta - zeta_bar|``;
    * pde: sup of the gamma difference plus sup over space-time nodes of
      ``|zeta - zeta_bar|``.
    """
    if type(theta) is not type(theta_bar):
        raise VariantMismatch(
            f"cannot compare {type(theta).__name__} with {type(theta_bar).__name__}")
    if isinstance(theta, ScalarParameter):
        _same_grid(theta, theta_bar)
        return float(np.max(np.abs(theta.z - theta_bar.z)))
    if isinstance(theta, SweepParameter):
        _same_grid(theta, theta_bar)
        da = _w1p_norm(theta.a - theta_bar.a, theta.grid, theta.p)
        dg = table_sup_distance(theta.gamma, theta_bar.gamma, probes, nonnegative=True)
        dz = float(np.max(np.linalg.norm(theta.zeta - theta_bar.zeta, axis=1)))
        return da + dg + dz
    if isinstance(theta, PdeParameter):
        _same_grid(theta, theta_bar)
        if theta.zeta.shape != theta_bar.zeta.shape:
            raise VariantMismatch("zeta fields live on different spatial grids")
        dg = table_sup_distance(theta.gamma, theta_bar.gamma, probes)
        return dg + float(np.max(np.abs(theta.zeta - theta_bar.zeta)))
    raise VariantMismatch(f"unknown parameter type {type(theta).__name__}")


def _same_grid(a, b):
    if a.grid != b.grid:
        raise VariantMismatch("parameters live on different time grids")
