"""Data sources: SDE path simulators, toy generators, analytic OU oracle, CSV IO."""
from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import kernels

log = logging.getLogger(__name__)

__all__ = [
    "read_table",
    "DataError",
    "ParseError",
    "PathDataset",
    "DuffingParams",
    "BoucWenParams",
    "OuParams",
    "simulate_duffing",
    "simulate_bouc_wen",
    "simulate_ou",
    "ou_mean_var",
    "ou_log_density",
    "ou_dlogp_dt",
    "gen_circles",
    "gen_moons",
    "gen_checkerboard",
    "gen_semisphere",
    "gen_inliers_outliers",
    "load_csv",
    "load_labeled_csv",
    "write_csv",
]

BLOWUP = 1e6


class DataError(ValueError):
    pass


class ParseError(ValueError):
    pass


@dataclass
class PathDataset:
    """Sample sets of a process at increasing time knots."""

    times: np.ndarray
    samples: list  # one (N_j, n) array per knot
    paired: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        if len(self.samples) != len(self.times):
            raise DataError(f"{len(self.samples)} sample sets for {len(self.times)} times")
        if np.any(np.diff(self.times) <= 0):
            raise DataError("times must be strictly increasing")
        widths = {np.shape(s)[1] for s in self.samples}
        if len(widths) > 1:
            raise DataError(f"sample widths differ: {sorted(widths)}")
        self.samples = [np.asarray(s, dtype=np.float64) for s in self.samples]

    @property
    def n_dim(self):
        return self.samples[0].shape[1]

    def index_of(self, t, atol=1e-12):
        idx = np.flatnonzero(np.abs(self.times - t) <= atol)
        if idx.size == 0:
            raise DataError(f"no samples recorded at t={t!r}")
        return int(idx[0])

    def at(self, t):
        return self.samples[self.index_of(t)]

    def save(self, directory):
        os.makedirs(directory, exist_ok=True)
        files = []
        for j, (t, s) in enumerate(zip(self.times, self.samples)):
            name = f"t{j:04d}.csv"
            write_csv(os.path.join(directory, name), s, [f"x_{k + 1}" for k in range(s.shape[1])])
            files.append(name)
        manifest = {
            "times": [float(t) for t in self.times],
            "counts": [int(s.shape[0]) for s in self.samples],
            "n_dim": int(self.n_dim),
            "paired": bool(self.paired),
            "files": files,
            "meta": self.meta,
        }
        with open(os.path.join(directory, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2)

    @classmethod
    def load(cls, directory):
        with open(os.path.join(directory, "manifest.json")) as fh:
            manifest = json.load(fh)
        samples = [load_csv(os.path.join(directory, f)) for f in manifest["files"]]
        return cls(np.array(manifest["times"]), samples, manifest.get("paired", False),
                   manifest.get("meta", {}))


# ---------------------------------------------------------------------------
# oscillators


@dataclass
class DuffingParams:
    zeta: float = 0.25
    omega0: float = 1.0
    eps_nl: float = 1.0
    s0: float = 0.5
    mean: tuple = (0.0, 0.0)
    std: tuple = (1.0, 1.0)
    corr: float = 0.5

    def __post_init__(self):
        if self.zeta <= 0 or self.omega0 <= 0 or self.s0 < 0:
            raise ValueError("zeta, omega0 must be positive and s0 non-negative")

    def initial_cov(self):
        R = np.array([[1.0, self.corr], [self.corr, 1.0]])
        return R * np.outer(self.std, self.std)


@dataclass
class BoucWenParams:
    zeta: float = 0.05
    omega0: float = 1.0
    alpha_e: float = 0.01
    gamma: float = 1.0
    beta: float = 1.0
    nu_exp: float = 1.0
    A_bw: float = 1.0
    s0: float = 0.5
    mean: tuple = (0.0, 0.0, 0.0)
    std: tuple = (1.0, 1.0, 1.0)
    corr: float = 0.8

    def __post_init__(self):
        if not 0.0 <= self.alpha_e <= 1.0:
            raise ValueError("alpha_e must lie in [0, 1]")
        if self.s0 < 0:
            raise ValueError("s0 must be non-negative")

    def initial_cov(self):
        R = np.full((3, 3), self.corr)
        np.fill_diagonal(R, 1.0)
        return R * np.outer(self.std, self.std)


def _record_steps(t_record, dt_sim):
    t_record = np.asarray(t_record, dtype=np.float64)
    if np.any(np.diff(t_record) <= 0) or t_record[0] < 0:
        raise ValueError("t_record must be non-negative and strictly increasing")
    if len(t_record) > 1 and dt_sim > np.min(np.diff(t_record)) + 1e-12:
        raise ValueError("dt_sim exceeds the spacing of t_record")
    steps = np.rint(t_record / dt_sim).astype(np.int64)
    if np.max(np.abs(steps * dt_sim - t_record)) > 1e-9:
        raise ValueError("t_record must be multiples of dt_sim")
    return t_record, steps


def _simulate(kernel, kernel_args, x0_fn, n_dim, noise_slot_std, n_paths, dt_sim, t_record,
              rng, chunk=50_000, max_resample=10):
    """Shared driver: chunked noise, blow-up resampling, PathDataset assembly."""
    t_record, steps = _record_steps(t_record, dt_sim)
    n_steps = int(steps[-1])

    def run(n):
        out = np.empty((len(steps), n, n_dim))
        for start in range(0, n, chunk):
            m = min(chunk, n - start)
            x0 = x0_fn(m)
            noise = noise_slot_std * rng.standard_normal((n_steps, m))
            out[:, start:start + m] = kernel(x0, noise, steps, dt_sim, *kernel_args)
        return out

    rec = run(n_paths)
    resampled = 0
    for _ in range(max_resample):
        bad = ~np.all(np.isfinite(rec) & (np.abs(rec) < BLOWUP), axis=(0, 2))
        n_bad = int(bad.sum())
        if n_bad == 0:
            break
        resampled += n_bad
        rec[:, bad] = run(n_bad)
    else:
        raise DataError("paths keep blowing up after resampling")
    if resampled:
        log.warning("resampled %d blown-up paths", resampled)
    return PathDataset(t_record, [rec[j] for j in range(len(steps))], paired=True,
                       meta={"resampled": resampled, "dt_sim": dt_sim})


def simulate_duffing(p: DuffingParams, n_paths, dt_sim, t_record, rng=None):
    """Paths of ``y'' + 2 zeta w0 y' + w0^2 (y + eps y^3) = xi`` as (y, y').

    White noise of spectral density ``s0`` enters the velocity as a Gaussian
    increment of variance ``2 pi s0 dt_sim`` after each RK4 drift step.
    """
    rng = np.random.default_rng(rng)
    mean = np.asarray(p.mean, dtype=np.float64)
    cov = p.initial_cov()
    return _simulate(
        kernels.duffing_paths,
        (float(p.zeta), float(p.omega0), float(p.eps_nl)),
        lambda m: rng.multivariate_normal(mean, cov, size=m, method="cholesky"),
        2, np.sqrt(2.0 * np.pi * p.s0 * dt_sim), n_paths, dt_sim, t_record, rng,
    )


def simulate_bouc_wen(p: BoucWenParams, n_paths, dt_sim, t_record, rng=None):
    """Hysteretic oscillator paths with state (y, z, y')."""
    rng = np.random.default_rng(rng)
    mean = np.asarray(p.mean, dtype=np.float64)
    cov = p.initial_cov()
    args = (float(p.zeta), float(p.omega0), float(p.alpha_e), float(p.gamma), float(p.beta),
            float(p.nu_exp), float(p.A_bw))
    return _simulate(
        kernels.bouc_wen_paths, args,
        lambda m: rng.multivariate_normal(mean, cov, size=m, method="cholesky"),
        3, np.sqrt(2.0 * np.pi * p.s0 * dt_sim), n_paths, dt_sim, t_record, rng,
    )


# ---------------------------------------------------------------------------
# Ornstein-Uhlenbeck: exact transitions, closed-form marginals


@dataclass
class OuParams:
    theta: float = 1.0
    sigma: float = 1.0
    m0: float = 0.0
    v0: float = 1.0

    def __post_init__(self):
        if self.theta <= 0 or self.sigma <= 0 or self.v0 <= 0:
            raise ValueError("theta, sigma and v0 must be positive")


def ou_mean_var(p: OuParams, t):
    t = np.asarray(t, dtype=np.float64)
    e = np.exp(-p.theta * t)
    var = p.v0 * e * e + p.sigma ** 2 * (1.0 - e * e) / (2.0 * p.theta)
    return p.m0 * e, var


def ou_log_density(p: OuParams, x, t):
    """Log-pdf of the scalar OU marginal at time ``t`` (x may be (k,) or (k, 1))."""
    x = np.asarray(x, dtype=np.float64)
    x = x[..., 0] if x.ndim == 2 else x
    m, v = ou_mean_var(p, t)
    return -0.5 * np.log(2.0 * np.pi * v) - 0.5 * (x - m) ** 2 / v


def ou_dlogp_dt(p: OuParams, x, t):
    """Analytic time derivative of the OU log-density."""
    x = np.asarray(x, dtype=np.float64)
    x = x[..., 0] if x.ndim == 2 else x
    e = np.exp(-p.theta * t)
    m = p.m0 * e
    v = p.v0 * e * e + p.sigma ** 2 * (1.0 - e * e) / (2.0 * p.theta)
    dm = -p.theta * m
    dv = -2.0 * p.theta * p.v0 * e * e + p.sigma ** 2 * e * e
    r = x - m
    return -0.5 * dv / v + r * dm / v + 0.5 * r * r * dv / (v * v)


def simulate_ou(p: OuParams, n_paths, t_record, rng=None, paired=True):
    """Scalar OU samples at ``t_record`` using exact Gaussian transitions.

    With ``paired=False`` every knot gets independently drawn marginal
    samples instead of slices of shared paths.
    """
    rng = np.random.default_rng(rng)
    t_record = np.asarray(t_record, dtype=np.float64)
    if np.any(np.diff(t_record) <= 0) or t_record[0] < 0:
        raise ValueError("t_record must be non-negative and strictly increasing")
    if not paired:
        m, v = ou_mean_var(p, t_record)
        samples = [(mj + np.sqrt(vj) * rng.standard_normal(n_paths))[:, None] for mj, vj in zip(m, v)]
        return PathDataset(t_record, samples, paired=False)
    m0, v0 = ou_mean_var(p, t_record[0])
    x = m0 + np.sqrt(v0) * rng.standard_normal(n_paths)
    samples = [x[:, None].copy()]
    for dt in np.diff(t_record):
        e = np.exp(-p.theta * dt)
        sd = np.sqrt(p.sigma ** 2 * (1.0 - e * e) / (2.0 * p.theta))
        x = x * e + sd * rng.standard_normal(n_paths)
        samples.append(x[:, None].copy())
    return PathDataset(t_record, samples, paired=True)


# ---------------------------------------------------------------------------
# static toy sets


def gen_circles(n_data, rng=None, noise=0.01):
    rng = np.random.default_rng(rng)
    theta = rng.uniform(0.0, 2.0 * np.pi, n_data)
    p = rng.integers(0, 2, n_data)
    r = 1.0 - p / 2.0
    X = r[:, None] * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    return X + noise * rng.standard_normal((n_data, 2))


def gen_moons(n_data, rng=None, noise=0.1):
    rng = np.random.default_rng(rng)
    theta = rng.uniform(0.0, np.pi, n_data)
    p = rng.integers(0, 2, n_data).astype(bool)
    c, s = np.cos(theta), np.sin(theta)
    a = np.where(p, 1.0 - c, c)
    b = np.where(p, 0.5 - s, s)
    return 2.0 * np.stack([a, b], axis=1) + noise * rng.standard_normal((n_data, 2)) - 1.0


def gen_checkerboard(n_data, rng=None):
    rng = np.random.default_rng(rng)
    u1 = rng.uniform(size=n_data)
    u2 = rng.uniform(size=n_data)
    p = rng.integers(0, 2, n_data)
    x1 = 2.0 * u1 - 1.0
    x2 = 0.5 * (p * u2 + np.mod(np.floor(x1), 2.0))
    return np.stack([x1, x2], axis=1)


def gen_semisphere(n_dim, n_data, alpha=5.0, rng=None, beta_max=0.01):
    if n_dim < 2:
        raise ValueError("n_dim must be at least 2")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    rng = np.random.default_rng(rng)
    Y = rng.standard_normal((n_data, n_dim))
    Y[:, -1] = alpha * np.abs(Y[:, -1])
    beta = rng.uniform(0.0, beta_max, n_data)
    return (1.0 + beta)[:, None] * Y / np.linalg.norm(Y, axis=1, keepdims=True)


def gen_inliers_outliers(n_data, outlier_frac=0.05, box=6.0, n_dim=2, rng=None):
    """Standard-normal inliers plus uniform-box outliers; label 1 marks outliers."""
    rng = np.random.default_rng(rng)
    n_out = int(round(outlier_frac * n_data))
    X = np.concatenate([
        rng.standard_normal((n_data - n_out, n_dim)),
        rng.uniform(-box, box, (n_out, n_dim)),
    ])
    y = np.concatenate([np.zeros(n_data - n_out, dtype=int), np.ones(n_out, dtype=int)])
    perm = rng.permutation(n_data)
    return X[perm], y[perm]


# ---------------------------------------------------------------------------
# CSV


def _parse_rows(path):
    with open(path, newline="") as fh:
        rows = [(k + 1, row) for k, row in enumerate(csv.reader(fh)) if row and any(c.strip() for c in row)]
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = None
    first = rows[0][1]
    try:
        [float(c) for c in first]
    except ValueError:
        header = [c.strip() for c in first]
        rows = rows[1:]
    width = len(header) if header else len(rows[0][1])
    body = np.empty((len(rows), width))
    for r, (lineno, row) in enumerate(rows):
        if len(row) != width:
            raise ParseError(f"{path}:{lineno}: expected {width} fields, got {len(row)}")
        try:
            body[r] = [float(c) for c in row]
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from None
    return header, body


def read_table(path):
    """``(header or None, numeric body)`` of a CSV file."""
    return _parse_rows(path)


def _normalize_rows(X):
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def load_csv(path, normalize=False):
    """Numeric CSV to a float matrix; a non-numeric first row is a header."""
    _, X = _parse_rows(path)
    return _normalize_rows(X) if normalize else X


def load_labeled_csv(path, label_col="label", normalize=False):
    """Matrix plus 0/1 labels from ``label_col`` (a header name or an index)."""
    header, body = _parse_rows(path)
    if isinstance(label_col, str):
        if header is None or label_col not in header:
            raise ParseError(f"{path}: no column named {label_col!r}")
        idx = header.index(label_col)
    else:
        idx = int(label_col) % body.shape[1]
    labels = body[:, idx]
    if not np.all(np.isin(labels, (0.0, 1.0))):
        raise ParseError(f"{path}: labels must be 0 or 1")
    X = np.delete(body, idx, axis=1)
    return (_normalize_rows(X) if normalize else X), labels.astype(int)


def write_csv(path, X, header):
    X = np.asarray(X)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in X:
            w.writerow([repr(float(v)) for v in row])
