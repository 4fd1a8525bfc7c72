"""Baselines and metrics: KDE, entropic OT, grid L2, ECDF/KS, rarity and ROC."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.stats import ks_2samp, rankdata

from . import kernels
from .density import DensityModel, log_density_data

log = logging.getLogger(__name__)

__all__ = [
    "KdeModel",
    "kde_fit_silverman",
    "kde_logpdf",
    "silverman_bandwidth",
    "OtResult",
    "sinkhorn_ot",
    "grid_l2",
    "EcdfResult",
    "ecdf_distance",
    "rarity_scores",
    "RocCurve",
    "roc_auc",
]

BANDWIDTH_FLOOR = 1e-6
OT_CAP = 2000


# ---------------------------------------------------------------------------
# KDE


@dataclass
class KdeModel:
    data: np.ndarray
    bandwidth: np.ndarray  # per-dimension

    def __post_init__(self):
        self.data = np.atleast_2d(np.asarray(self.data, dtype=np.float64))
        h = np.broadcast_to(np.asarray(self.bandwidth, dtype=np.float64), (self.data.shape[1],))
        if np.any(~(h > 0)):
            raise ValueError("bandwidths must be positive")
        self.bandwidth = h.copy()


def silverman_bandwidth(sigma, n, d):
    """``sigma * (4 / ((d + 2) n)) ** (1 / (d + 4))``."""
    return np.asarray(sigma, dtype=np.float64) * (4.0 / ((d + 2) * n)) ** (1.0 / (d + 4))


def kde_fit_silverman(data):
    """Gaussian product-kernel KDE with per-dimension Silverman bandwidths."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data[:, None]
    n, d = data.shape
    if n < 2:
        raise ValueError("KDE needs at least two data points")
    h = silverman_bandwidth(data.std(axis=0, ddof=1), n, d)
    if np.any(h < BANDWIDTH_FLOOR):
        log.warning("KDE: zero spread in dims %s, bandwidth floored at %g",
                    np.flatnonzero(h < BANDWIDTH_FLOOR).tolist(), BANDWIDTH_FLOOR)
        h = np.maximum(h, BANDWIDTH_FLOOR)
    return KdeModel(data, h)


def kde_logpdf(kde: KdeModel, x):
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 0 or (X.ndim == 1 and kde.data.shape[1] > 1)
    X = X.reshape(-1, kde.data.shape[1])
    n, d = kde.data.shape
    inv_h = 1.0 / kde.bandwidth
    norm = np.log(n) + 0.5 * d * np.log(2.0 * np.pi) + np.sum(np.log(kde.bandwidth))
    out = kernels.kde_logsumexp(np.ascontiguousarray(X), kde.data, inv_h) - norm
    return float(out[0]) if single else out


# ---------------------------------------------------------------------------
# Entropic optimal transport


@dataclass
class OtResult:
    cost: float
    converged: bool
    iterations: int
    marginal_error: float
    n_a: int
    n_b: int
    subsampled: bool

    def to_dict(self):
        return dict(self.__dict__)


def _subsample(X, cap, rng):
    if X.shape[0] <= cap:
        return X, False
    return X[np.sort(rng.choice(X.shape[0], cap, replace=False))], True


def _sq_dists(A, B):
    C = (A ** 2).sum(1)[:, None] - 2.0 * A @ B.T + (B ** 2).sum(1)[None, :]
    return np.maximum(C, 0.0)


def _logdomain_stage(C, log_a, log_b, f, g, eps, max_iter, tol):
    """Alternate soft-min updates at fixed ``eps``; returns potentials and status."""
    a = np.exp(log_a)
    f_new = kernels.softmin_rows(C, g + eps * log_b, eps)
    err = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        f = f_new
        g = kernels.softmin_cols(C, f + eps * log_a, eps)
        # columns now match exactly; measure the row marginals
        f_new = kernels.softmin_rows(C, g + eps * log_b, eps)
        err = float(np.sum(np.abs(a * np.expm1((f - f_new) / eps))))
        if err < tol:
            break
    return f, g, it, err


def _stabilized_stage(C, log_a, log_b, f, g, eps, max_iter, tol, absorb=1e3, check_every=10):
    """Scaling iterations on ``K = exp((f + g - C) / eps)``.

    The scalings ``u, v`` are folded into the log-potentials whenever they
    grow past ``absorb``, so ``K`` never under- or overflows badly.
    """
    a, b = np.exp(log_a), np.exp(log_b)

    def kernel():
        return np.exp((f[:, None] + g[None, :] - C) / eps)

    K = kernel()
    u = np.ones_like(a)
    v = np.ones_like(b)
    err = np.inf
    it = 0
    with np.errstate(divide="ignore", over="ignore"):
        for it in range(1, max_iter + 1):
            Kv = K @ (b * v)
            u = 1.0 / Kv
            Ku = K.T @ (a * u)
            v = 1.0 / Ku
            big = max(np.abs(u).max(), np.abs(v).max(), 1.0 / max(u.min(), 1e-300),
                      1.0 / max(v.min(), 1e-300))
            if not np.isfinite(big) or big > absorb:
                f = f + eps * np.log(u)
                g = g + eps * np.log(v)
                u.fill(1.0)
                v.fill(1.0)
                K = kernel()
            if it % check_every == 0 or it == max_iter:
                # columns match after the v-update; measure the rows
                err = float(np.sum(np.abs(a * u * (K @ (b * v)) - a)))
                if err < tol:
                    break
    return f + eps * np.log(u), g + eps * np.log(v), it, err


_STAGES = {"stabilized": _stabilized_stage, "log": _logdomain_stage}


def _plan_cost(C, f, g, log_a, log_b, eps, rows=512):
    total = 0.0
    for s in range(0, C.shape[0], rows):
        c = C[s:s + rows]
        logP = log_a[s:s + rows, None] + log_b[None, :] + (f[s:s + rows, None] + g[None, :] - c) / eps
        total += float(np.sum(np.exp(logP) * c))
    return total


def sinkhorn_ot(A, B, epsilon=0.01, max_iter=10_000, tol=1e-6, cap=OT_CAP, seed=0,
                scaling=0.5, method="stabilized"):
    """Entropic OT transport cost between point clouds ``A`` and ``B``.

    Squared-Euclidean ground cost, uniform weights. Returns ``<P, C>``
    without the entropy term. Inputs larger than ``cap`` rows are
    subsampled (seeded). ``epsilon`` is approached by geometric annealing
    from the cost scale (factor ``scaling`` per stage), which only
    warm-starts the potentials; the final stage runs to ``tol`` (L1 row
    marginal violation) at the requested ``epsilon``.

    ``method="stabilized"`` iterates scalings with periodic absorption into
    log-potentials (fast, BLAS matvecs); ``method="log"`` runs pure
    log-domain soft-min updates (slower, never exponentiates the plan).
    """
    if method not in _STAGES:
        raise ValueError(f"unknown Sinkhorn method {method!r}")
    stage = _STAGES[method]
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    if A.shape[0] == 0 or B.shape[0] == 0:
        raise ValueError("point sets must be non-empty")
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"point sets differ in width: {A.shape[1]} vs {B.shape[1]}")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    rng = np.random.default_rng(seed)
    A, sub_a = _subsample(A, cap, rng)
    B, sub_b = _subsample(B, cap, rng)
    n, m = A.shape[0], B.shape[0]
    C = _sq_dists(A, B)
    log_a = np.full(n, -np.log(n))
    log_b = np.full(m, -np.log(m))
    f = np.zeros(n)
    g = np.zeros(m)
    eps = max(float(C.max()), epsilon)
    total_it = 0
    if scaling:
        while eps > epsilon:
            f, g, it, _ = stage(C, log_a, log_b, f, g, eps, 20, tol)
            total_it += it
            eps = max(eps * scaling, epsilon)
    f, g, it, err = stage(C, log_a, log_b, f, g, epsilon, max_iter, tol)
    total_it += it
    converged = err < tol
    if not converged:
        log.warning("Sinkhorn did not converge: marginal error %.3g after %d iterations", err, it)
    cost = _plan_cost(C, f, g, log_a, log_b, epsilon)
    return OtResult(cost, bool(converged), total_it, err, n, m, sub_a or sub_b)


# ---------------------------------------------------------------------------
# Grid L2 and ECDF


def grid_l2(p_logvals, q_logvals, cell_volume):
    """``sqrt(sum (exp p - exp q)^2 * cell_volume)`` over a common grid."""
    p = np.asarray(p_logvals, dtype=np.float64)
    q = np.asarray(q_logvals, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"grid shapes differ: {p.shape} vs {q.shape}")
    return float(np.sqrt(np.sum((np.exp(p) - np.exp(q)) ** 2) * cell_volume))


@dataclass
class EcdfResult:
    ks: float
    pvalue: float
    a: tuple  # (sorted values, cumulative fractions)
    b: tuple


def _ecdf_points(x):
    xs = np.sort(x)
    return xs, np.arange(1, xs.size + 1) / xs.size


def ecdf_distance(samples_a, samples_b):
    """Two-sample KS statistic plus the ECDF step points of both samples."""
    a = np.ravel(np.asarray(samples_a, dtype=np.float64))
    b = np.ravel(np.asarray(samples_b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ValueError("samples must be non-empty")
    res = ks_2samp(a, b)
    return EcdfResult(float(res.statistic), float(res.pvalue), _ecdf_points(a), _ecdf_points(b))


# ---------------------------------------------------------------------------
# Rarity scores and ROC


def rarity_scores(dm: DensityModel, X):
    """``-log rho_1(x)`` per row; larger is rarer."""
    return -log_density_data(dm, np.atleast_2d(X))


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float


def roc_auc(scores, labels):
    """ROC curve over all distinct thresholds and the Mann-Whitney AUC.

    Label 1 is the positive (rare) class; higher scores rank as more
    positive. Ties count one half.
    """
    s = np.ravel(np.asarray(scores, dtype=np.float64))
    y = np.ravel(np.asarray(labels))
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    y = y.astype(bool)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC is undefined with a single class present")
    ranks = rankdata(s)
    auc = (ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)

    order = np.argsort(-s, kind="mergesort")
    s_sorted, y_sorted = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s_sorted)), s.size - 1]
    tp = np.cumsum(y_sorted)[last]
    fp = (last + 1) - tp
    fpr = np.r_[0.0, fp / n_neg]
    tpr = np.r_[0.0, tp / n_pos]
    thresholds = np.r_[np.inf, s_sorted[last]]
    return RocCurve(fpr, tpr, thresholds, float(auc))
