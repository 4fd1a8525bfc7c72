"""Log-density reconstruction from a trained network.

``log rho_{t_k}(x) = log rho_0(x) + sum_{j<=k} f(x, t_mid_j) dt_j``, with a
linear extension inside an interval, plus the matching score and the
sample-mean KL estimates.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classifier import ClassifierModel
from .timegrid import LatentDensity, TimeGrid

__all__ = [
    "DensityModel",
    "pairwise_sum",
    "log_density_at_knot",
    "log_density_at",
    "log_density_data",
    "score",
    "kl_estimates",
]

# rows per forward pass when stacking (x, t_mid) pairs
CHUNK_ROWS = 200_000


@dataclass
class DensityModel:
    model: ClassifierModel
    grid: TimeGrid
    base: LatentDensity

    @property
    def n_dim(self):
        return self.model.n_dim


def pairwise_sum(terms, axis=0):
    """Tree summation along ``axis``."""
    terms = np.moveaxis(np.asarray(terms, dtype=np.float64), axis, 0)
    n = terms.shape[0]
    if n == 0:
        return np.zeros(terms.shape[1:])
    if n == 1:
        return terms[0].copy()
    while terms.shape[0] > 1:
        k = terms.shape[0]
        half = k // 2
        paired = terms[:half] + terms[half:2 * half]
        terms = np.concatenate([paired, terms[2 * half:]]) if k % 2 else paired
    return terms[0]


def _increments(dm: DensityModel, X, mids, widths, with_grad=False):
    """``f(x, mids_k) * widths_k`` for every row and k, shape (k, batch).

    With ``with_grad`` also returns the matching x-gradients (k, batch, n).
    """
    X = np.asarray(X, dtype=np.float64)
    B, K = X.shape[0], len(mids)
    vals = np.empty((K, B))
    grads = np.empty((K, B, X.shape[1])) if with_grad else None
    if K == 0:
        return vals, grads
    per = max(1, CHUNK_ROWS // max(B, 1))
    for k0 in range(0, K, per):
        ks = slice(k0, min(K, k0 + per))
        m = mids[ks]
        w = widths[ks]
        rows = np.tile(X, (len(m), 1))
        t_rows = np.repeat(m, B)
        w_rows = np.repeat(w, B)
        if with_grad:
            y, g = dm.model.f_and_grad_x(rows, t_rows, weights=w_rows)
            grads[ks] = g.reshape(len(m), B, -1)
        else:
            y = dm.model.f(rows, t_rows)
        vals[ks] = (y * w_rows).reshape(len(m), B)
    return vals, grads


def _batched(X):
    X = np.asarray(X, dtype=np.float64)
    return (X[None, :], True) if X.ndim == 1 else (X, False)


def _chunks(X, fn, rows=20_000):
    if X.shape[0] <= rows:
        return fn(X)
    parts = [fn(X[s:s + rows]) for s in range(0, X.shape[0], rows)]
    return np.concatenate(parts)


def log_density_at_knot(dm: DensityModel, x, k):
    """``log rho`` at knot ``t_k``; ``k = 0`` returns the base log-pdf."""
    if not 0 <= k <= dm.grid.N:
        raise IndexError(f"knot {k} outside 0..{dm.grid.N}")
    X, single = _batched(x)

    def fn(Xc):
        inc, _ = _increments(dm, Xc, dm.grid.midpoints[:k], dm.grid.dt[:k])
        return dm.base.logpdf(Xc) + pairwise_sum(inc)

    out = _chunks(X, fn)
    return float(out[0]) if single else out


def _locate(grid: TimeGrid, t):
    times = grid.times
    if not times[0] <= t <= times[-1]:
        raise ValueError(f"t={t} outside grid [{times[0]}, {times[-1]}]")
    k = int(np.searchsorted(times, t, side="right") - 1)
    return min(k, grid.N)


def _at_terms(dm, t):
    k = _locate(dm.grid, t)
    mids = list(dm.grid.midpoints[:k])
    widths = list(dm.grid.dt[:k])
    partial = t - dm.grid.times[k]
    if k < dm.grid.N and partial > 0.0:
        mids.append(dm.grid.midpoints[k])
        widths.append(partial)
    return np.asarray(mids), np.asarray(widths)


def log_density_at(dm: DensityModel, x, t):
    """``log rho_t``: knot sum up to the last knot ``<= t`` plus the partial interval."""
    X, single = _batched(x)
    mids, widths = _at_terms(dm, t)
    k = _locate(dm.grid, t)

    def fn(Xc):
        inc, _ = _increments(dm, Xc, mids, widths)
        # knot part summed exactly as in log_density_at_knot, partial added after
        head = dm.base.logpdf(Xc) + pairwise_sum(inc[:k])
        return head + inc[k:].sum(axis=0) if len(mids) > k else head

    out = _chunks(X, fn)
    return float(out[0]) if single else out


def log_density_data(dm: DensityModel, x):
    """``log rho`` at the final knot (the data density in static mode)."""
    return log_density_at_knot(dm, x, dm.grid.N)


def score(dm: DensityModel, x, t=None):
    """Exact x-gradient of :func:`log_density_at`; ``t`` defaults to the last knot."""
    t = dm.grid.times[-1] if t is None else t
    X, single = _batched(x)
    mids, widths = _at_terms(dm, t)

    def fn(Xc):
        _, g = _increments(dm, Xc, mids, widths, with_grad=True)
        return dm.base.grad_logpdf(Xc) + g.sum(axis=0)

    out = _chunks(X, fn, rows=5_000)
    return out[0] if single else out


def kl_estimates(dm: DensityModel, samples_p0, samples_pt, k):
    """Forward and reverse KL between the base and ``rho_{t_k}``.

    ``KL(rho_0 || rho_k) = -sum_j E_{rho_0}[f] dt_j`` and
    ``KL(rho_k || rho_0) = sum_j E_{rho_k}[f] dt_j``, each expectation a
    sample mean.
    """
    samples_p0 = np.atleast_2d(np.asarray(samples_p0, dtype=np.float64))
    samples_pt = np.atleast_2d(np.asarray(samples_pt, dtype=np.float64))
    if samples_p0.shape[0] == 0 or samples_pt.shape[0] == 0:
        raise ValueError("sample sets must be non-empty")
    if not 0 <= k <= dm.grid.N:
        raise IndexError(f"knot {k} outside 0..{dm.grid.N}")
    mids, widths = dm.grid.midpoints[:k], dm.grid.dt[:k]
    inc0, _ = _increments(dm, samples_p0, mids, widths)
    inct, _ = _increments(dm, samples_pt, mids, widths)
    forward = -float(pairwise_sum(inc0.mean(axis=1)))
    reverse = float(pairwise_sum(inct.mean(axis=1)))
    return forward, reverse
