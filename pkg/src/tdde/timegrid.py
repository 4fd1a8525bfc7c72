"""Time knots, the Gaussian latent density, and contrastive pair batches."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffcore import ShapeError
from .simdata import DataError, PathDataset

__all__ = [
    "TimeGrid",
    "LatentDensity",
    "PairBatch",
    "make_grid",
    "interpolate",
    "static_pair_batch",
    "path_pair_batch",
]


@dataclass(frozen=True)
class TimeGrid:
    times: np.ndarray
    kind: str = "explicit"

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("a grid needs at least two knots")
        if np.any(np.diff(t) <= 0):
            raise ValueError("grid times must be strictly increasing")
        object.__setattr__(self, "times", t)

    @property
    def N(self):
        return self.times.size - 1

    @property
    def dt(self):
        """Interval lengths; ``dt[j-1]`` is the length of interval j."""
        return np.diff(self.times)

    @property
    def midpoints(self):
        return self.times[:-1] + 0.5 * self.dt

    def to_dict(self):
        return {"kind": self.kind, "times": [float(t) for t in self.times]}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["times"], dtype=np.float64), d.get("kind", "explicit"))


def make_grid(kind="linear", N=10, t_min=0.01, times=None, t_max=1.0):
    """Build a grid on ``[0, t_max]``.

    ``linear``: ``t_j = t_max * j / N``. ``logarithmic``: ``t_0 = 0`` then
    ``N`` knots from ``t_min`` to ``t_max`` with a constant ratio.
    ``explicit``: ``times`` passed through.
    """
    kind = kind.lower()
    if kind == "explicit":
        if times is None:
            raise ValueError("explicit grid needs times")
        return TimeGrid(np.asarray(times, dtype=np.float64), "explicit")
    if N < 1:
        raise ValueError("N must be at least 1")
    if kind == "linear":
        return TimeGrid(t_max * np.arange(N + 1) / N, "linear")
    if kind in ("log", "logarithmic"):
        if not 0.0 < t_min < t_max:
            raise ValueError("logarithmic grid needs 0 < t_min < t_max")
        if N == 1:
            return TimeGrid(np.array([0.0, t_max]), "logarithmic")
        ratio = (t_max / t_min) ** (1.0 / (N - 1))
        tail = t_min * ratio ** np.arange(N)
        tail[-1] = t_max
        return TimeGrid(np.concatenate([[0.0], tail]), "logarithmic")
    raise ValueError(f"unknown grid kind {kind!r}")


class LatentDensity:
    """Gaussian reference density: standard normal or N(mean, cov)."""

    def __init__(self, n_dim, mean=None, cov=None):
        self.n_dim = int(n_dim)
        self.mean = np.zeros(self.n_dim) if mean is None else np.asarray(mean, dtype=np.float64)
        if cov is None:
            self.cov = np.eye(self.n_dim)
            self.standard = mean is None
        else:
            self.cov = np.asarray(cov, dtype=np.float64)
            if not np.allclose(self.cov, self.cov.T):
                raise ValueError("covariance must be symmetric")
            self.standard = False
        self._chol = np.linalg.cholesky(self.cov)  # raises if not positive definite
        self._prec = np.linalg.inv(self.cov)
        self._logdet = 2.0 * np.sum(np.log(np.diag(self._chol)))

    @classmethod
    def std_normal(cls, n_dim):
        return cls(n_dim)

    def logpdf(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        r = X - self.mean
        if self.standard:
            q = np.einsum("ij,ij->i", r, r)
        else:
            q = np.einsum("ij,jk,ik->i", r, self._prec, r)
        return -0.5 * (q + self._logdet + self.n_dim * np.log(2.0 * np.pi))

    def grad_logpdf(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        r = X - self.mean
        return -r if self.standard else -r @ self._prec

    def sample(self, n, rng):
        Z = rng.standard_normal((n, self.n_dim))
        if self.standard:
            return Z
        return self.mean + Z @ self._chol.T

    def to_dict(self):
        if self.standard:
            return {"kind": "std_normal", "n_dim": self.n_dim}
        return {"kind": "gaussian", "n_dim": self.n_dim, "mean": self.mean.tolist(),
                "cov": self.cov.tolist()}

    @classmethod
    def from_dict(cls, d):
        if d["kind"] == "std_normal":
            return cls(d["n_dim"])
        return cls(d["n_dim"], d["mean"], d["cov"])


@dataclass
class PairBatch:
    x_prev: np.ndarray  # label-0 side, drawn at t_{j-1}
    x_next: np.ndarray  # label-1 side, drawn at t_j
    t_mid: float
    dt: float


def interpolate(x0, x1, t):
    """Linear interpolant ``(1 - t) x0 + t x1``."""
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x0.shape != x1.shape:
        raise ShapeError(f"interpolant endpoints differ in shape: {x0.shape} vs {x1.shape}")
    if t == 0.0:
        return x0.copy()
    if t == 1.0:
        return x1.copy()
    return (1.0 - t) * x0 + t * x1


def static_pair_batch(data, latent: LatentDensity, grid: TimeGrid, j, n_batch, rng):
    """Interpolant samples at ``t_{j-1}`` and ``t_j`` with fresh latents, unpaired."""
    data = np.asarray(data)
    if data.shape[0] == 0:
        raise ValueError("empty dataset")
    if not 1 <= j <= grid.N:
        raise IndexError(f"interval {j} outside 1..{grid.N}")
    t0, t1 = grid.times[j - 1], grid.times[j]
    z0 = latent.sample(n_batch, rng)
    z1 = latent.sample(n_batch, rng)
    x0 = data[rng.integers(0, data.shape[0], n_batch)]
    x1 = data[rng.integers(0, data.shape[0], n_batch)]
    return PairBatch(interpolate(z0, x0, t0), interpolate(z1, x1, t1), 0.5 * (t0 + t1), t1 - t0)


def path_pair_batch(paths: PathDataset, j, n_batch, rng, grid: TimeGrid | None = None):
    """Uniform draws with replacement from the knots bounding interval ``j``.

    Rows repeat whenever ``n_batch`` exceeds the stored count.
    """
    times = paths.times if grid is None else grid.times
    if not 1 <= j <= len(times) - 1:
        raise IndexError(f"interval {j} outside 1..{len(times) - 1}")
    t0, t1 = times[j - 1], times[j]
    s0 = paths.at(t0)
    s1 = paths.at(t1)
    if s0.shape[0] == 0 or s1.shape[0] == 0:
        raise DataError(f"no samples at t={t0 if s0.shape[0] == 0 else t1!r}")
    x_prev = s0[rng.integers(0, s0.shape[0], n_batch)]
    x_next = s1[rng.integers(0, s1.shape[0], n_batch)]
    return PairBatch(x_prev, x_next, 0.5 * (t0 + t1), t1 - t0)
