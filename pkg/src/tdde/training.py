"""Contrastive training of the time-dependent classifier.

Each optimizer step looks at one interval ``[t_{j-1}, t_j]``: samples from
the earlier knot carry label 0 and samples from the later knot label 1, and
the classifier output is ``sigmoid(f(x, t_mid) * dt + log nu)``. At the
optimum ``f * dt`` is the log-ratio of the two densities.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit

from .classifier import LOGIT_CLAMP, ClassifierModel
from .diffcore import AdamState, TrainingError, adam_step, mlp_backward, mlp_forward
from .simdata import PathDataset
from .timegrid import LatentDensity, TimeGrid, path_pair_batch, static_pair_batch

__all__ = [
    "TrainConfig",
    "TrainReport",
    "StaticSource",
    "brier_loss",
    "log_loss",
    "nu_weighted_loss",
    "train",
    "ml_train",
]

PROB_FLOOR = 1e-12


@dataclass
class TrainConfig:
    score: str = "brier"
    nu: float = 1.0
    epochs: int = 1000
    batch_size: int = 1000
    lr: float = 1e-3
    lr_decay: float = 1.0
    weight_decay: float = 0.0
    seed: int = 0
    log_every: int = 0

    def __post_init__(self):
        if self.score not in ("brier", "log"):
            raise ValueError(f"score must be 'brier' or 'log', got {self.score!r}")
        for name in ("nu", "epochs", "batch_size", "lr", "lr_decay"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")


@dataclass
class TrainReport:
    epoch_losses: list = field(default_factory=list)
    final_loss: float = float("nan")
    wall_time: float = 0.0
    steps: int = 0

    def to_dict(self):
        return asdict(self)


@dataclass
class StaticSource:
    """Static data bridged to a latent density by the linear interpolant."""

    data: np.ndarray
    latent: LatentDensity


def _check_probs(*arrays):
    for a in arrays:
        if np.any(~(a > 0.0) | ~(a < 1.0)):
            raise ValueError("classifier outputs must lie strictly inside (0, 1)")


def brier_loss(d_prev, d_next):
    """``(1/2N) sum [d_prev^2 + (1 - d_next)^2]`` and its gradients."""
    d_prev = np.asarray(d_prev, dtype=np.float64)
    d_next = np.asarray(d_next, dtype=np.float64)
    _check_probs(d_prev, d_next)
    n = d_prev.shape[0]
    loss = (np.sum(d_prev ** 2) + np.sum((1.0 - d_next) ** 2)) / (2.0 * n)
    return loss, d_prev / n, -(1.0 - d_next) / n


def log_loss(d_prev, d_next):
    """``(1/2N) sum [-log(1 - d_prev) - log d_next]`` with a 1e-12 floor."""
    d_prev = np.asarray(d_prev, dtype=np.float64)
    d_next = np.asarray(d_next, dtype=np.float64)
    _check_probs(d_prev, d_next)
    n = d_prev.shape[0]
    q_prev = np.maximum(1.0 - d_prev, PROB_FLOOR)
    q_next = np.maximum(d_next, PROB_FLOOR)
    loss = (-np.sum(np.log(q_prev)) - np.sum(np.log(q_next))) / (2.0 * n)
    return loss, 1.0 / (2.0 * n * q_prev), -1.0 / (2.0 * n * q_next)


_LOSSES = {"brier": brier_loss, "log": log_loss}


def _side_terms(score, d_prev, d_next):
    """Per-sample costs and their derivatives for each class side."""
    if score == "brier":
        return d_prev ** 2, 2.0 * d_prev, (1.0 - d_next) ** 2, -2.0 * (1.0 - d_next)
    q_prev = np.maximum(1.0 - d_prev, PROB_FLOOR)
    q_next = np.maximum(d_next, PROB_FLOOR)
    return -np.log(q_prev), 1.0 / q_prev, -np.log(q_next), -1.0 / q_next


def nu_weighted_loss(d_prev, d_next, nu, score="brier"):
    """Class terms weighted ``1 : nu`` under the prior ``1 / (1 + nu)``.

    Reduces to the unweighted score at ``nu = 1``.
    """
    if not nu > 0:
        raise ValueError("nu must be positive")
    if nu == 1.0:
        return _LOSSES[score](d_prev, d_next)
    d_prev = np.asarray(d_prev, dtype=np.float64)
    d_next = np.asarray(d_next, dtype=np.float64)
    _check_probs(d_prev, d_next)
    n = d_prev.shape[0]
    c0, g0, c1, g1 = _side_terms(score, d_prev, d_next)
    w = 1.0 / (1.0 + nu)
    loss = w * (c0.sum() / n + nu * c1.sum() / n)
    return loss, w * g0 / n, w * nu * g1 / n


def _logit_grad(y, dt, log_nu, loss_fn, n_prev):
    """Forward the logits through sigmoid and the loss; return loss, dL/dy."""
    s = y * dt + log_nu
    inside = np.abs(s) < LOGIT_CLAMP
    d = expit(np.clip(s, -LOGIT_CLAMP, LOGIT_CLAMP))
    loss, g_prev, g_next = loss_fn(d[:n_prev], d[n_prev:])
    dL_dd = np.concatenate([g_prev, g_next])
    return loss, dL_dd * d * (1.0 - d) * dt * inside


def train(model: ClassifierModel, source, grid: TimeGrid, cfg: TrainConfig, progress=None):
    """Fit ``model`` in place and return ``(model, TrainReport)``.

    ``source`` is a :class:`PathDataset` (observations at every grid knot) or
    a :class:`StaticSource`. One epoch visits every interval once in shuffled
    order, with one Adam step per interval; the learning rate is multiplied
    by ``cfg.lr_decay`` after each epoch.
    """
    rng = np.random.default_rng(cfg.seed)
    if isinstance(source, PathDataset):
        for t in grid.times:
            source.index_of(t)

        def batch_for(j):
            return path_pair_batch(source, j, cfg.batch_size, rng, grid)
    elif isinstance(source, StaticSource):
        def batch_for(j):
            return static_pair_batch(source.data, source.latent, grid, j, cfg.batch_size, rng)
    else:
        raise TypeError(f"unsupported training source {type(source).__name__}")

    if cfg.nu == 1.0:
        loss_fn = _LOSSES[cfg.score]
    else:
        def loss_fn(dp, dn):
            return nu_weighted_loss(dp, dn, cfg.nu, cfg.score)
    log_nu = float(np.log(cfg.nu))

    state = AdamState.zeros(model.net)
    report = TrainReport()
    lr = cfg.lr
    t_start = time.perf_counter()
    for epoch in range(cfg.epochs):
        total = 0.0
        for j in rng.permutation(grid.N) + 1:
            b = batch_for(int(j))
            X = np.concatenate([b.x_prev, b.x_next])
            y, cache = mlp_forward(model.net, model.inputs(X, b.t_mid))
            if not np.all(np.isfinite(y)):
                raise TrainingError(f"non-finite network output at epoch {epoch}, interval {j}")
            loss, dL_dy = _logit_grad(y, b.dt, log_nu, loss_fn, b.x_prev.shape[0])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, interval {j}")
            grads, _ = mlp_backward(model.net, cache, dL_dy)
            adam_step(model.net, grads, state, lr, cfg.weight_decay)
            total += loss
        mean = total / grid.N
        report.epoch_losses.append(float(mean))
        if cfg.log_every and (epoch + 1) % cfg.log_every == 0:
            line = f"epoch {epoch + 1:6d}  loss {mean:.6f}  lr {lr:.3e}"
            (progress or print)(line)
        lr *= cfg.lr_decay
    report.final_loss = report.epoch_losses[-1]
    report.wall_time = time.perf_counter() - t_start
    report.steps = state.step
    return model, report


def ml_train(model: ClassifierModel, data, latent: LatentDensity, grid: TimeGrid, lam,
             cfg: TrainConfig, divergence=1e4, progress=None):
    """Penalized likelihood fit of ``g(x) = sum_j f(x, t_mid_j) dt_j``.

    Minimizes ``-mean_data g + lam * mean_latent g^2`` with one Adam step per
    epoch on fresh minibatches. Raises :class:`TrainingError` if the
    objective leaves ``[-divergence, divergence]``.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    rng = np.random.default_rng(cfg.seed)
    data = np.asarray(data, dtype=np.float64)
    mids, dts = grid.midpoints, grid.dt
    nb, N = cfg.batch_size, grid.N
    t_rows = np.repeat(mids, 2 * nb)
    w_rows = np.repeat(dts, 2 * nb)
    state = AdamState.zeros(model.net)
    report = TrainReport()
    lr = cfg.lr
    t_start = time.perf_counter()
    for epoch in range(cfg.epochs):
        xd = data[rng.integers(0, data.shape[0], nb)]
        xl = latent.sample(nb, rng)
        block = np.concatenate([xd, xl])
        X = np.tile(block, (N, 1))
        y, cache = mlp_forward(model.net, model.inputs(X, t_rows))
        g = (y * w_rows).reshape(N, 2 * nb).sum(axis=0)
        g_data, g_lat = g[:nb], g[nb:]
        loss = -g_data.mean() + lam * np.mean(g_lat ** 2)
        if not np.isfinite(loss) or abs(loss) > divergence:
            raise TrainingError(f"objective diverged at epoch {epoch}: {loss!r}")
        dg = np.concatenate([np.full(nb, -1.0 / nb), 2.0 * lam * g_lat / nb])
        grads, _ = mlp_backward(model.net, cache, np.tile(dg, N) * w_rows)
        adam_step(model.net, grads, state, lr, cfg.weight_decay)
        report.epoch_losses.append(float(loss))
        if cfg.log_every and (epoch + 1) % cfg.log_every == 0:
            (progress or print)(f"epoch {epoch + 1:6d}  objective {loss:.6f}  lr {lr:.3e}")
        lr *= cfg.lr_decay
    report.final_loss = report.epoch_losses[-1]
    report.wall_time = time.perf_counter() - t_start
    report.steps = state.step
    return model, report
