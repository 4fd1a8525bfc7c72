"""Gradient-based MCMC over a learned (or analytic) log-density.

All chains advance together as rows of one array. Random numbers come
from a single generator in a fixed step-major, chain-minor order, so a
seed fixes every chain.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

__all__ = [
    "UniformBox",
    "DataInit",
    "Fixed",
    "ChainOutput",
    "seed_chains",
    "ula",
    "hmc",
]

DIVERGENCE = 1000.0


@dataclass
class UniformBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.atleast_1d(np.asarray(self.lower, dtype=np.float64))
        self.upper = np.atleast_1d(np.asarray(self.upper, dtype=np.float64))
        if np.any(self.lower >= self.upper):
            raise ValueError("box lower bounds must be below upper bounds")


@dataclass
class DataInit:
    data: np.ndarray
    noise_std: float = 0.01

    def __post_init__(self):
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")


@dataclass
class Fixed:
    point: np.ndarray


@dataclass
class ChainOutput:
    samples: np.ndarray  # final state of every surviving chain
    trajectory: np.ndarray | None = None  # (n_kept, n_chains, n)
    acceptance_rate: float | None = None
    n_failed: int = 0

    def draws(self):
        """All kept draws flattened to (n_draws, n); final states if none were kept."""
        if self.trajectory is None:
            return self.samples
        return self.trajectory.reshape(-1, self.trajectory.shape[-1])

    def stats(self):
        return {
            "n_chains": int(self.samples.shape[0]),
            "n_failed": int(self.n_failed),
            "acceptance_rate": None if self.acceptance_rate is None else float(self.acceptance_rate),
        }


def seed_chains(strategy, n_chains, rng):
    """Initial states for ``n_chains`` chains, one row each."""
    if isinstance(strategy, UniformBox):
        return rng.uniform(strategy.lower, strategy.upper, size=(n_chains, strategy.lower.size))
    if isinstance(strategy, DataInit):
        data = np.atleast_2d(np.asarray(strategy.data, dtype=np.float64))
        if data.shape[0] == 0:
            raise ValueError("cannot seed from an empty dataset")
        rows = data[rng.integers(0, data.shape[0], n_chains)]
        if strategy.noise_std > 0:
            rows = rows + strategy.noise_std * rng.standard_normal(rows.shape)
        return rows
    if isinstance(strategy, Fixed):
        return np.tile(np.asarray(strategy.point, dtype=np.float64), (n_chains, 1))
    raise TypeError(f"unknown seed strategy {type(strategy).__name__}")


def _drop_failed(x, alive):
    bad = ~np.all(np.isfinite(x), axis=1)
    newly = bad & alive
    if newly.any():
        alive &= ~bad
        x[newly] = 0.0  # keeps later arithmetic quiet; the rows are discarded
    return int(newly.sum())


def ula(score_fn, seeds, step, n_steps, rng, keep_every=0):
    """Unadjusted Langevin: ``x <- x + step * score(x) + sqrt(2 step) * xi``.

    Chains that hit a non-finite state are dropped from the output and
    counted in ``n_failed``. ``keep_every > 0`` stores every k-th state.
    """
    if step < 0:
        raise ValueError("step must be non-negative")
    x = np.array(seeds, dtype=np.float64)
    if step == 0.0 or n_steps == 0:
        return ChainOutput(x, None, None, 0)
    alive = np.ones(x.shape[0], dtype=bool)
    kept = []
    noise_scale = np.sqrt(2.0 * step)
    for k in range(n_steps):
        xi = rng.standard_normal(x.shape)
        with np.errstate(over="ignore", invalid="ignore"):
            x = x + step * score_fn(x) + noise_scale * xi
        _drop_failed(x, alive)
        if keep_every and (k + 1) % keep_every == 0:
            kept.append(x[alive].copy())
    n_failed = int((~alive).sum())
    if n_failed:
        log.warning("ULA: %d chains left the finite range and were dropped", n_failed)
    traj = np.stack(kept) if kept and all(len(a) == len(kept[-1]) for a in kept) else None
    return ChainOutput(x[alive], traj, None, n_failed)


def hmc(logp_fn, grad_fn, seeds, step, n_leapfrog, n_samples, burn_in, rng):
    """Hamiltonian Monte Carlo with unit mass and a fixed trajectory length.

    Runs ``burn_in + n_samples`` transitions per chain and keeps the last
    ``n_samples`` states. Proposals whose energy error exceeds 1000 (or is
    non-finite) are rejected.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    if n_leapfrog < 1:
        raise ValueError("n_leapfrog must be at least 1")
    x = np.array(seeds, dtype=np.float64)
    lp = logp_fn(x)
    g = grad_fn(x)
    kept = np.empty((n_samples, *x.shape))
    accepted = 0
    total = 0
    for it in range(burn_in + n_samples):
        p0 = rng.standard_normal(x.shape)
        u = rng.uniform(size=x.shape[0])
        q, p, gq = x.copy(), p0.copy(), g.copy()
        with np.errstate(over="ignore", invalid="ignore"):
            p += 0.5 * step * gq
            for i in range(n_leapfrog):
                q += step * p
                gq = grad_fn(q)
                if i < n_leapfrog - 1:
                    p += step * gq
            p += 0.5 * step * gq
            lq = logp_fn(q)
            h0 = -lp + 0.5 * np.sum(p0 * p0, axis=1)
            h1 = -lq + 0.5 * np.sum(p * p, axis=1)
            dh = h1 - h0
        ok = np.isfinite(dh) & (dh < DIVERGENCE) & np.all(np.isfinite(q), axis=1)
        accept = ok & (np.log(u) < -np.where(ok, dh, 0.0))
        x[accept] = q[accept]
        lp[accept] = lq[accept]
        g[accept] = gq[accept]
        if it >= burn_in:
            kept[it - burn_in] = x
            accepted += int(accept.sum())
            total += x.shape[0]
    rate = accepted / total if total else None
    return ChainOutput(x.copy(), kept, rate, 0)
