"""Soft-DTW between index sequences and the normalised soft-DTW divergence.

Costs are e(a, b) = (pred[a] - target[b])**2 by default (``metric="abs"``
gives |pred[a] - target[b]| for hard-DTW evaluation parity). The forward
table uses R(0, 0) = 0 with the first row and column at +inf; lambda = 0
reduces the soft minimum to the hard minimum exactly.
"""

from __future__ import annotations

import math

import numba
import numpy as np

from .errors import InputError

DEFAULT_LAMBDA = 0.1


def soft_min(values, lam: float) -> float:
    """-lam * log(sum(exp(-v / lam))), or min(values) when lam == 0."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise InputError("soft_min of an empty list")
    if lam < 0:
        raise InputError(f"lambda must be non-negative, got {lam}")
    if not np.all(np.isfinite(v)):
        raise InputError("soft_min values must be finite")
    lo = v.min()
    if lam == 0:
        return float(lo)
    return float(lo - lam * np.log(np.sum(np.exp(-(v - lo) / lam))))


@numba.njit(cache=True)
def _softmin3(a, b, c, lam):
    lo = min(a, b, c)
    if lam == 0.0 or lo == np.inf:
        return lo
    s = math.exp(-(a - lo) / lam) + math.exp(-(b - lo) / lam) + math.exp(-(c - lo) / lam)
    return lo - lam * math.log(s)


@numba.njit(cache=True)
def _forward(cost, lam):
    n, m = cost.shape
    r = np.full((n + 2, m + 2), np.inf)
    r[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            r[i, j] = cost[i - 1, j - 1] + _softmin3(r[i - 1, j - 1], r[i - 1, j], r[i, j - 1], lam)
    return r


@numba.njit(cache=True)
def _backward(cost, r, lam):
    """Expected-alignment weights E = dR(n, m) / d cost."""
    n, m = cost.shape
    d = np.zeros((n + 2, m + 2))
    d[1:n + 1, 1:m + 1] = cost
    e = np.zeros((n + 2, m + 2))
    r = r.copy()
    for i in range(1, n + 1):
        r[i, m + 1] = -np.inf
    for j in range(1, m + 1):
        r[n + 1, j] = -np.inf
    r[n + 1, m + 1] = r[n, m]
    e[n + 1, m + 1] = 1.0
    for j in range(m, 0, -1):
        for i in range(n, 0, -1):
            a = math.exp((r[i + 1, j] - r[i, j] - d[i + 1, j]) / lam)
            b = math.exp((r[i, j + 1] - r[i, j] - d[i, j + 1]) / lam)
            c = math.exp((r[i + 1, j + 1] - r[i, j] - d[i + 1, j + 1]) / lam)
            e[i, j] = e[i + 1, j] * a + e[i, j + 1] * b + e[i + 1, j + 1] * c
    return e[1:n + 1, 1:m + 1]


def _seq(x, name):
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size == 0:
        raise InputError(f"{name} sequence is empty")
    if not np.all(np.isfinite(x)):
        raise InputError(f"{name} sequence contains non-finite values")
    return x


def pairwise_cost(pred, target, metric: str = "sqeuclidean") -> np.ndarray:
    diff = np.subtract.outer(pred, target)
    if metric == "sqeuclidean":
        return diff * diff
    if metric == "abs":
        return np.abs(diff)
    raise InputError(f"unknown metric {metric!r}")


def soft_dtw(pred, target, lam: float = DEFAULT_LAMBDA, metric: str = "sqeuclidean") -> float:
    pred, target = _seq(pred, "predicted"), _seq(target, "target")
    if lam < 0:
        raise InputError(f"lambda must be non-negative, got {lam}")
    r = _forward(pairwise_cost(pred, target, metric), float(lam))
    return float(r[pred.size, target.size])


def _cost_grads(pred, target, weights):
    diff = np.subtract.outer(pred, target)
    g = 2.0 * weights * diff
    return g.sum(axis=1), -g.sum(axis=0)


def soft_dtw_value_and_grads(pred, target, lam: float = DEFAULT_LAMBDA):
    """(D, dD/dpred, dD/dtarget) for the squared cost."""
    pred, target = _seq(pred, "predicted"), _seq(target, "target")
    if not lam > 0:
        raise InputError("soft-DTW gradient needs lambda > 0")
    cost = pairwise_cost(pred, target)
    r = _forward(cost, float(lam))
    w = _backward(cost, r, float(lam))
    g_pred, g_target = _cost_grads(pred, target, w)
    return float(r[pred.size, target.size]), g_pred, g_target


def soft_dtw_grad(pred, target, lam: float = DEFAULT_LAMBDA) -> np.ndarray:
    """Gradient of soft_dtw(pred, target) with respect to pred."""
    return soft_dtw_value_and_grads(pred, target, lam)[1]


def _self_value_and_grad(x, lam):
    d, g1, g2 = soft_dtw_value_and_grads(x, x, lam)
    return d, g1 + g2


def soft_dtw_divergence(pred, target, lam: float = DEFAULT_LAMBDA) -> float:
    """D(pred, target) - (D(pred, pred) + D(target, target)) / 2; zero at pred == target."""
    if not lam > 0:
        raise InputError("the divergence needs lambda > 0")
    return (soft_dtw(pred, target, lam)
            - 0.5 * (soft_dtw(pred, pred, lam) + soft_dtw(target, target, lam)))


def soft_dtw_divergence_value_and_grad(pred, target, lam: float = DEFAULT_LAMBDA):
    d_xy, g_xy, _ = soft_dtw_value_and_grads(pred, target, lam)
    d_xx, g_xx = _self_value_and_grad(pred, lam)
    d_yy = soft_dtw(target, target, lam)
    return d_xy - 0.5 * (d_xx + d_yy), g_xy - 0.5 * g_xx


def soft_dtw_divergence_grad(pred, target, lam: float = DEFAULT_LAMBDA) -> np.ndarray:
    return soft_dtw_divergence_value_and_grad(pred, target, lam)[1]
