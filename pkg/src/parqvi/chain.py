"""Exact weighted projection onto chains of bounded differences.

Solves

    min  sum_k w_k (x_k - y_k)^2 / 2
    s.t. lo_k <= x_k - x_{k-1} <= hi_k,  k = 1..N,   x_0 = start,

optionally with ``x_N = end`` pinned (then ``w_N`` and ``y_N`` are unused).
Dynamic programming over the chain: the derivative of each stage value
function is nondecreasing and piecewise linear on a bounded interval, kept
as (knots, values) with repeated knots for jumps.  Work is O(N^2).
"""
import numpy as np


def _argmin(X, P):
    i = int(P.searchsorted(0.0, side="left"))
    if i == 0:
        return X[0]
    if i == P.size:
        return X[-1]
    if X[i] == X[i - 1]:
        return X[i]
    return X[i - 1] - P[i - 1] * (X[i] - X[i - 1]) / (P[i] - P[i - 1])


def chain_projection(y, w, lo, hi, start, end=None):
    """Return ``x_1..x_N`` (``x_N = end`` when pinned)."""
    y = np.asarray(y, float)
    N = y.size
    w = np.broadcast_to(np.asarray(w, float), (N,))
    lo = np.broadcast_to(np.asarray(lo, float), (N,))
    hi = np.broadcast_to(np.asarray(hi, float), (N,))
    if np.any(lo > hi):
        raise ValueError("empty difference interval")
    free = N - 1 if end is not None else N
    if end is not None and not (start + lo.sum() - 1e-12 <= end <= start + hi.sum() + 1e-12):
        raise ValueError("pinned end unreachable from start")
    x = np.empty(N)
    if free == 0:
        x[-1] = end
        return x
    X = np.array([start + lo[0], start + hi[0]])
    P = w[0] * (X - y[0])
    mins = np.empty(free)
    for k in range(free):
        m = _argmin(X, P)
        mins[k] = m
        if k == free - 1:
            break
        i = int(X.searchsorted(m, side="left"))
        j = int(X.searchsorted(m, side="right"))
        if i < j:
            # m is a knot: keep the one-sided limits of the derivative there
            p_left, p_right = min(P[i], 0.0), max(P[j - 1], 0.0)
        else:
            p_left = p_right = 0.0
        l_k, h_k = lo[k + 1], hi[k + 1]
        X = np.concatenate([X[:i] + l_k, [m + l_k] * 2, [m + h_k] * 2, X[j:] + h_k])
        P = np.concatenate([P[:i], [p_left, 0.0, 0.0, p_right], P[j:]])
        P = P + w[k + 1] * (X - y[k + 1])
    if end is not None:
        x[-1] = end
        x[free - 1] = min(max(mins[free - 1], end - hi[-1]), end - lo[-1])
    else:
        x[free - 1] = mins[free - 1]
    for k in range(free - 2, -1, -1):
        x[k] = min(max(mins[k], x[k + 1] - hi[k + 1]), x[k + 1] - lo[k + 1])
    return x
