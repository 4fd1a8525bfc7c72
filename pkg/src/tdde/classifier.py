"""Time-dependent network f(x, t) and the classifier d = sigmoid(f * dt)."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .diffcore import MlpParams, ShapeError, init_mlp, mlp_backward, mlp_forward, params_from_record, params_to_record

__all__ = [
    "TimeEmbedding",
    "ClassifierModel",
    "make_embedding",
    "make_model",
    "embed_time",
    "f_eval",
    "d_eval",
    "grad_f_x",
    "save_model",
    "load_model",
    "LOGIT_CLAMP",
]

LOGIT_CLAMP = 30.0


@dataclass(frozen=True)
class TimeEmbedding:
    mode: str = "raw"  # "raw" appends t, "fourier" appends [cos, sin] features
    n_freq: int = 16
    scale: float = 1.0
    seed: int = 0
    freqs: tuple = ()

    @property
    def dim(self):
        return 1 if self.mode == "raw" else 2 * self.n_freq

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        if self.mode == "raw":
            return t[:, None].copy()
        ang = 2.0 * np.pi * t[:, None] * np.asarray(self.freqs)[None, :]
        return np.concatenate([np.cos(ang), np.sin(ang)], axis=1)


def make_embedding(mode="raw", n_freq=16, scale=1.0, seed=0):
    if mode == "raw":
        return TimeEmbedding("raw", n_freq, scale, seed, ())
    if mode != "fourier":
        raise ValueError(f"unknown embedding mode {mode!r}")
    freqs = np.random.default_rng(seed).normal(0.0, scale, size=n_freq)
    return TimeEmbedding("fourier", n_freq, float(scale), int(seed), tuple(float(f) for f in freqs))


def embed_time(emb: TimeEmbedding, t):
    """Embedding row for a scalar ``t``."""
    return emb(t)[0]


@dataclass
class ClassifierModel:
    embedding: TimeEmbedding
    net: MlpParams

    @property
    def n_dim(self):
        return self.net.d_in - self.embedding.dim

    def inputs(self, X, t):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_dim:
            raise ShapeError(f"x has shape {X.shape}, model expects (batch, {self.n_dim})")
        t = np.asarray(t, dtype=np.float64)
        if t.ndim == 0:
            e = np.broadcast_to(self.embedding(t), (X.shape[0], self.embedding.dim))
        else:
            if t.shape != (X.shape[0],):
                raise ShapeError(f"t has shape {t.shape}, expected scalar or ({X.shape[0]},)")
            e = self.embedding(t)
        return np.concatenate([X, e], axis=1)

    def f(self, X, t):
        """Batched f(x, t): ``X`` is (batch, n), ``t`` scalar or (batch,)."""
        y, _ = mlp_forward(self.net, self.inputs(X, t))
        return y

    def f_and_grad_x(self, X, t, weights=None):
        """f and d(sum_i w_i f_i)/dx, the embedding slots dropped."""
        y, cache = mlp_forward(self.net, self.inputs(X, t))
        w = np.ones_like(y) if weights is None else weights
        _, gin = mlp_backward(self.net, cache, w, need_params=False)
        return y, gin[:, : self.n_dim]


def make_model(n_dim, hidden=(128, 128, 128), activation="relu", embedding="raw",
               n_freq=16, scale=1.0, seed=0):
    emb = make_embedding(embedding, n_freq, scale, seed)
    sizes = [n_dim + emb.dim, *hidden, 1]
    net = init_mlp(sizes, activation, np.random.default_rng([seed, 1]))
    return ClassifierModel(emb, net)


def _as_batch(x):
    x = np.asarray(x, dtype=np.float64)
    return (x[None, :], True) if x.ndim == 1 else (x, False)


def f_eval(model: ClassifierModel, x, t):
    X, single = _as_batch(x)
    y = model.f(X, t)
    return float(y[0]) if single else y


def sigmoid_logit(s):
    """Sigmoid with the logit clamped to +-LOGIT_CLAMP."""
    return expit(np.clip(s, -LOGIT_CLAMP, LOGIT_CLAMP))


def d_eval(model: ClassifierModel, x, t, dt, nu=1.0):
    """Probability that ``x`` came from the later of the two densities.

    ``d = sigmoid(f(x, t) * dt + log(nu))``; with the default ``nu = 1`` this
    is the plain time-scaled classifier and d = 0.5 exactly at ``dt = 0``.
    """
    if dt < 0:
        raise ValueError(f"dt must be non-negative, got {dt}")
    X, single = _as_batch(x)
    s = model.f(X, t) * dt
    if nu != 1.0:
        s = s + np.log(nu)
    d = sigmoid_logit(s)
    return float(d[0]) if single else d


def grad_f_x(model: ClassifierModel, x, t):
    X, single = _as_batch(x)
    _, g = model.f_and_grad_x(X, t)
    return g[0] if single else g


def model_to_record(model: ClassifierModel):
    e = model.embedding
    return {
        "net": params_to_record(model.net),
        "embedding": {
            "mode": e.mode,
            "n_freq": e.n_freq,
            "scale": e.scale,
            "seed": e.seed,
            "freqs": list(e.freqs),
        },
    }


def model_from_record(rec):
    e = rec["embedding"]
    emb = TimeEmbedding(e["mode"], int(e["n_freq"]), float(e["scale"]), int(e["seed"]),
                        tuple(float(f) for f in e["freqs"]))
    return ClassifierModel(emb, params_from_record(rec["net"]))


def save_model(model, path, extra=None):
    rec = model_to_record(model)
    if extra:
        rec.update(extra)
    with open(path, "w") as fh:
        json.dump(rec, fh)


def load_model(path):
    with open(path) as fh:
        rec = json.load(fh)
    return model_from_record(rec), rec
