"""Moving convex families K(theta; t), H-projections onto them, and the
transformation maps that carry K(theta; t) into K(theta_bar; t)."""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .chain import chain_projection
from .exceptions import ConvergenceError, DimensionError, InfeasibleError, VariantMismatch
from .parameters import PdeParameter, ScalarParameter, SweepParameter, theta_distance
from .spaces import SpaceMetric, TimeGrid, v_norm

MEMBER_TOL = 1e-10


class HalfLine:
    """``{r : r >= z(t) - offset}`` driven by a :class:`ScalarParameter`.

    The set acts coordinatewise, so states of any length are accepted.
    """

    variant = ScalarParameter

    def __init__(self, offset=0.0):
        self.offset = float(offset)

    def bound(self, theta, k):
        return theta.z[k] - self.offset

    def violation(self, theta, k, z):
        _check_variant(self, theta)
        z = np.asarray(z, float)
        return float(max(0.0, np.max(self.bound(theta, k) - z)))

    def project(self, theta, k, z, workspace=None):
        _check_variant(self, theta)
        return np.maximum(np.asarray(z, float), self.bound(theta, k))

    def describe(self):
        return f"half-line r >= z(t) - {self.offset:g}"


class CircleSegment:
    """``{z in R^2 : a(t).(z - a(t)) = 0, |z - a(t)| <= gamma(zeta(t))}``.

    A segment through ``a(t)`` orthogonal to it.  Projection is exact in the
    (diagonally) weighted metric: a 1-D quadratic along the segment, clipped.
    """

    variant = SweepParameter

    def __init__(self, weights=None):
        self.weights = np.ones(2) if weights is None else np.asarray(weights, float)

    def violation(self, theta, k, z):
        _check_variant(self, theta)
        z = _as_planar(z)
        a = theta.a[k]
        d = z - a
        off_line = abs(float(a @ d))
        excess = np.linalg.norm(d) - theta.radius(k)
        return float(max(off_line, excess, 0.0))

    def project(self, theta, k, z, workspace=None):
        _check_variant(self, theta)
        z = _as_planar(z)
        a = theta.a[k]
        direction = np.array([-a[1], a[0]])
        w = self.weights
        s = float(np.sum(w * direction * (z - a)) / np.sum(w * direction ** 2))
        r = theta.radius(k)
        return a + np.clip(s, -r, r) * direction

    def describe(self):
        return "segment a(t) + s a(t)^perp, |s| <= gamma(|zeta(t)|)"


class GradientBall:
    """``{z : |grad z| <= gamma(zeta(., t)), z = 0 at both ends}`` on a 1-D grid.

    The gradient bound is imposed edgewise with the bound evaluated at the
    edge-midpoint temperature.  The default projection is an exact dynamic
    program along the chain of nodes; ``method="dykstra"`` instead alternates
    over the two groups of disjoint edges (even and odd), each of which has a
    closed-form weighted projection.
    """

    variant = PdeParameter

    def __init__(self, metric: SpaceMetric, gap_tol=1e-9, feas_tol=1e-12, max_sweeps=10_000,
                 method="chain"):
        if metric.v_mode != "discrete-gradient":
            raise ValueError("GradientBall needs a discrete-gradient metric")
        if method not in ("chain", "dykstra"):
            raise ValueError(f"unknown projection method {method!r}")
        self.method = method
        self.metric = metric
        self.gap_tol = gap_tol
        self.feas_tol = feas_tol
        self.max_sweeps = max_sweeps
        n = metric.n
        self._inv_mass = 1.0 / metric.weights
        self._inv_mass[0] = self._inv_mass[-1] = 0.0
        edges = np.arange(n - 1)
        self._groups = [edges[0::2], edges[1::2]]

    def edge_bounds(self, theta, k):
        zeta = theta.zeta[k]
        if zeta.shape != (self.metric.n,):
            raise DimensionError(f"zeta has {zeta.size} nodes, grid has {self.metric.n}")
        return theta.gamma(0.5 * (zeta[:-1] + zeta[1:]))

    def slopes(self, z):
        return np.diff(z) / self.metric.mesh

    def violation(self, theta, k, z):
        _check_variant(self, theta)
        z = self.metric.check(z)
        ex = np.abs(self.slopes(z)) - self.edge_bounds(theta, k)
        return float(max(0.0, ex.max(), abs(z[0]), abs(z[-1])))

    def project(self, theta, k, z, workspace=None):
        """Weighted H-projection.

        The default ``chain`` method is exact (dynamic programming along the
        grid) and reports the duality gap of multipliers recovered from
        stationarity.  With ``dykstra``, ``workspace`` (a dict private to the
        caller) carries the increments between consecutive calls as a warm
        start; the result does not depend on it beyond the stopping tolerance.
        """
        _check_variant(self, theta)
        y = self.metric.check(z).copy()
        y[0] = y[-1] = 0.0
        caps = self.metric.mesh * self.edge_bounds(theta, k)
        if self.method == "chain":
            x, info = self._chain(y, caps)
        else:
            x, info = self._dykstra(y, caps, workspace)
        if workspace is not None:
            workspace["last_info"] = info
        return x

    def _chain(self, y, caps):
        w = self.metric.weights
        if np.all(np.abs(np.diff(y)) <= caps):
            return y, {"gap": 0.0, "sweeps": 0}
        x = np.zeros_like(y)
        if y.size > 2:
            x[1:] = chain_projection(y[1:], w[1:], -caps, caps, 0.0, end=0.0)
        gap = self._chain_gap(x, y, caps)
        viol = max(0.0, float(np.max(np.abs(np.diff(x)) - caps))) / self.metric.mesh
        if gap > self.gap_tol or viol > self.feas_tol:
            raise ConvergenceError(
                f"chain projection lost accuracy (gap {gap:.3e}, violation {viol:.3e})",
                residual=gap)
        return x, {"gap": gap, "sweeps": 0}

    def _chain_gap(self, x, y, caps):
        # edge multipliers lam_e = lam_0 + sum_{i<=e} w_i (x_i - y_i) over interior i;
        # lam_0 is free (the pinned ends absorb it) and is chosen to minimize the gap
        r = self.metric.weights[1:-1] * (x[1:-1] - y[1:-1])
        base = np.concatenate([[0.0], np.cumsum(r)])
        d = np.diff(x)
        cand = -base
        lam = cand[:, None] + base[None, :]
        gaps = np.sum(caps * np.abs(lam) - lam * d, axis=1)
        return float(max(gaps.min(), 0.0))

    def _dykstra(self, y, caps, workspace):
        n = y.size
        im = self._inv_mass
        if n == 2:
            return y, {"gap": 0.0, "sweeps": 0}
        incs = None
        if workspace is not None and workspace.get("increments") is not None:
            incs = [inc.copy() for inc in workspace["increments"]]
            if any(inc.shape != y.shape for inc in incs):
                incs = None
        if incs is None:
            incs = [np.zeros(n), np.zeros(n)]
        x = y - incs[0] - incs[1]
        gap = np.inf
        for sweep in range(1, self.max_sweeps + 1):
            for g, edges in enumerate(self._groups):
                w = x + incs[g]
                xn = w.copy()
                i, j = edges, edges + 1
                d = w[j] - w[i]
                c = caps[edges]
                excess = d - np.clip(d, -c, c)
                denom = im[i] + im[j]
                lam = np.divide(excess, denom, out=np.zeros_like(excess), where=denom > 0)
                xn[i] += lam * im[i]
                xn[j] -= lam * im[j]
                incs[g] = w - xn
                x = xn
            gap, viol = self._gap(x, incs, caps)
            if gap <= self.gap_tol and viol <= self.feas_tol:
                break
        else:
            raise ConvergenceError(
                f"Dykstra projection did not converge in {self.max_sweeps} sweeps "
                f"(dual gap {gap:.3e})", residual=gap)
        if workspace is not None:
            workspace["increments"] = incs
        return x, {"gap": gap, "sweeps": sweep}

    def _gap(self, x, incs, caps):
        m = self.metric.weights
        free = self._inv_mass > 0
        total = 0.0
        for g, edges in enumerate(self._groups):
            i, j = edges, edges + 1
            mp = m * incs[g]
            # multiplier of the edge: M p = lam (e_j - e_i) on free nodes
            lam = np.where(free[j], mp[j], -mp[i])
            total += np.sum(caps[edges] * np.abs(lam) - lam * (x[j] - x[i]))
        viol = np.max(np.abs(np.diff(x)) - caps)
        return float(total), float(max(viol, 0.0) / self.metric.mesh)

    def describe(self):
        return "edgewise gradient bound |z_{i+1} - z_i| / h <= gamma(zeta_mid), z = 0 at ends"


def _as_planar(z):
    z = np.asarray(z, float)
    if z.shape != (2,):
        raise DimensionError(f"planar state expected, got shape {z.shape}")
    return z


def _check_variant(family, theta):
    if not isinstance(theta, family.variant):
        raise VariantMismatch(
            f"{type(family).__name__} needs a {family.variant.__name__}, "
            f"got {type(theta).__name__}")


def member(family, theta, t_index, z, tol=MEMBER_TOL) -> bool:
    return family.violation(theta, t_index, z) <= tol


def project(family, theta, t_index, z, workspace=None) -> np.ndarray:
    return family.project(theta, t_index, z, workspace)


def trajectory_violation(family, theta, traj, start=1):
    """Largest violation over nodes ``k >= start`` and the node attaining it."""
    viols = [family.violation(theta, k, traj[k]) for k in range(start, len(traj))]
    if not viols:
        return 0.0, None
    i = int(np.argmax(viols))
    return float(viols[i]), start + i


def project_trajectory(family, theta, traj):
    traj = np.asarray(traj, float)
    ws = {}
    return np.array([family.project(theta, k, traj[k], ws) for k in range(len(traj))])


# --- transformation maps ---------------------------------------------------

def rotation_matrix(a, a_bar, tol=1e-10):
    a = np.asarray(a, float)
    a_bar = np.asarray(a_bar, float)
    if abs(np.linalg.norm(a) - 1) > tol or abs(np.linalg.norm(a_bar) - 1) > tol:
        raise ValueError("rotation needs unit vectors")
    sin = a[0] * a_bar[1] - a[1] * a_bar[0]
    cos = a[0] * a_bar[0] + a[1] * a_bar[1]
    return np.array([[cos, -sin], [sin, cos]])


def rotation_apply(a, a_bar, z):
    """Rotate ``z`` by the angle carrying ``a`` onto ``a_bar``."""
    return rotation_matrix(a, a_bar) @ np.asarray(z, float)


@dataclass
class TransformationMap:
    """``z -> (1 + c0(eps)) R(t) z + sigma_eps(t)`` for one constraint family.

    Per family:

    * ``CircleSegment``: ``R`` rotates ``a(t)`` onto ``a_bar(t)``,
      ``sigma = eps * a_bar(t)``, ``c0(eps) = -eps``, admissible radius
      ``eps * gamma_lo``.
    * ``GradientBall``: ``R = I``, ``sigma = 0``, ``c0(eps) = -eps``, radius
      ``eps * eps0``.
    * ``HalfLine``: ``R = I``, ``c0 = 0``, ``sigma = eps`` (an upward shift),
      radius ``eps / 2``.

    The radii assume gamma tables with Lipschitz constant at most 1.
    """

    family: object
    c0: Optional[Callable[[float], float]] = None

    def __post_init__(self):
        if self.c0 is None:
            self.c0 = (lambda e: 0.0) if isinstance(self.family, HalfLine) else (lambda e: -e)

    def rotation(self, theta, theta_bar, k):
        if isinstance(self.family, CircleSegment):
            return rotation_matrix(theta.a[k], theta_bar.a[k])
        return None

    def shift(self, theta, theta_bar, eps, k):
        if isinstance(self.family, CircleSegment):
            return eps * theta_bar.a[k]
        if isinstance(self.family, HalfLine):
            return eps
        return 0.0

    def delta(self, theta, eps):
        if isinstance(self.family, CircleSegment):
            return eps * theta.gamma_lo
        if isinstance(self.family, GradientBall):
            return eps * theta.eps0
        return eps / 2


def transform(tmap: TransformationMap, theta, theta_bar, eps, t_index, z, check=True):
    if not 0 < eps <= 1:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    z = np.asarray(z, float)
    if check and not member(tmap.family, theta, t_index, z):
        raise InfeasibleError("transform input", t_index, tmap.family.violation(theta, t_index, z))
    R = tmap.rotation(theta, theta_bar, t_index)
    rz = z if R is None else R @ z
    return (1 + tmap.c0(eps)) * rz + tmap.shift(theta, theta_bar, eps, t_index)


@dataclass
class MoscoReport:
    gap: float
    bound: float
    distance: float
    eps: float
    R0: float
    sigma0: float
    rho: float
    eta_norm: float

    @property
    def within_bound(self):
        return self.gap <= self.bound * (1 + 1e-12) + 1e-14


def _op_norm(M, metric):
    """Operator norm of a 2x2 (or scalar) matrix in the V metric."""
    if M is None:
        return 0.0
    if metric.p == 2 and np.allclose(metric.weights, metric.weights[0]):
        return float(np.linalg.norm(M, 2))
    ang = np.linspace(0, 2 * np.pi, 4096, endpoint=False)
    pts = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    num = np.array([v_norm(M @ x, metric) for x in pts])
    den = np.array([v_norm(x, metric) for x in pts])
    return float(np.max(num / den))


def transform_diagnostics(tmap, theta, theta_bar, eps, grid: TimeGrid, metric: SpaceMetric):
    """Measured constants of the (A1)/(A2) bounds for one parameter pair.

    Returns ``(R0_pair, sigma0_pair, rho)`` where ``R0_pair * d`` reproduces
    the rotation part, ``sigma0_pair * (d + eps)`` the shift part and ``rho``
    is the sup operator norm of the rotation.
    """
    d = theta_distance(theta, theta_bar)
    K = grid.K
    q = metric.conjugate
    if isinstance(tmap.family, CircleSegment):
        mats = [tmap.rotation(theta, theta_bar, k) for k in range(K + 1)]
        eye = np.eye(2)
        sup_h = max(float(np.linalg.norm(M - eye, 2)) for M in mats)
        sup_v = max(_op_norm(M - eye, metric) for M in mats)
        dR = [np.linalg.norm((mats[k + 1] - mats[k]) / grid.tau, 2) for k in range(K)]
        der = float((grid.tau * np.sum(np.asarray(dR) ** q)) ** (1 / q))
        rot = sup_h + sup_v + der
        rho = max(_op_norm(M, metric) for M in mats)
        sig = eps * theta_bar.a
        sup_sig = max(v_norm(s, metric) for s in sig)
        dsig = np.diff(sig, axis=0) / grid.tau
        # V = R^2 with l^p; its dual carries l^q
        dual = np.sum(np.abs(dsig) ** q * metric.weights, axis=1) ** (1 / q)
        sig_der = float((grid.tau * np.sum(dual ** q)) ** (1 / q))
        shift = sup_sig + sig_der
    elif isinstance(tmap.family, HalfLine):
        rot, rho = 0.0, 1.0
        shift = eps * float(np.sum(metric.weights)) ** (1 / metric.p)
    else:
        rot, rho, shift = 0.0, 1.0, 0.0
    R0 = rot / d if d > 0 else 0.0
    sigma0 = shift / (d + eps)
    return R0, sigma0, rho


def mosco_gap(tmap, theta, theta_bar, eps, eta, grid: TimeGrid, metric: SpaceMetric,
              R0=None, sigma0=None) -> MoscoReport:
    """Discrete ``L^p(0,T;V)`` distance between ``eta`` and its transform,
    together with the right side of the bound

    ``(R0 d + |c0(eps)| rho) |eta|_{L^p(V)} + sigma0 (d + eps) T^{1/p}``.

    ``R0`` and ``sigma0`` default to the values measured for this pair.
    """
    eta = np.asarray(eta, float)
    K = grid.K
    for k in range(K + 1):
        viol = tmap.family.violation(theta, k, eta[k])
        if viol > MEMBER_TOL:
            raise InfeasibleError("eta", k, viol)
    moved = np.array([transform(tmap, theta, theta_bar, eps, k, eta[k], check=False)
                      for k in range(K + 1)])
    p = metric.p
    diff = np.array([v_norm(moved[k] - eta[k], metric) for k in range(K)])
    gap = float((grid.tau * np.sum(diff ** p)) ** (1 / p))
    eta_norm = float((grid.tau * np.sum([v_norm(eta[k], metric) ** p for k in range(K)])) ** (1 / p))
    R0_m, s0_m, rho = transform_diagnostics(tmap, theta, theta_bar, eps, grid, metric)
    R0 = R0_m if R0 is None else R0
    sigma0 = s0_m if sigma0 is None else sigma0
    d = theta_distance(theta, theta_bar)
    bound = (R0 * d + abs(tmap.c0(eps)) * rho) * eta_norm + sigma0 * (d + eps) * grid.T ** (1 / p)
    return MoscoReport(gap=gap, bound=bound, distance=d, eps=eps, R0=R0, sigma0=sigma0,
                       rho=rho, eta_norm=eta_norm)
