"""Small dense feed-forward networks with hand-written reverse mode.

The architecture family is fixed (affine layers with ReLU or SiLU between
them, affine scalar output), so gradients are written out layer by layer
rather than recorded on a tape. Both parameter gradients (for training)
and input gradients (for score functions) come out of one backward pass.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

__all__ = [
    "ShapeError",
    "TrainingError",
    "Layer",
    "MlpParams",
    "ForwardCache",
    "AdamState",
    "init_mlp",
    "mlp_forward",
    "mlp_backward",
    "adam_step",
    "params_to_record",
    "params_from_record",
]

ACTIVATIONS = ("relu", "silu")
RECORD_FORMAT = "tdde-mlp"
RECORD_VERSION = 1


class ShapeError(ValueError):
    """Array shapes do not chain the way the network expects."""


class TrainingError(RuntimeError):
    """Optimization produced something non-finite or divergent."""


@dataclass
class Layer:
    weight: np.ndarray  # (d_out, d_in)
    bias: np.ndarray  # (d_out,)

    @property
    def shape(self):
        return self.weight.shape


@dataclass
class MlpParams:
    layers: list
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        for k, layer in enumerate(self.layers):
            if layer.weight.ndim != 2 or layer.bias.shape != (layer.weight.shape[0],):
                raise ShapeError(f"layer {k}: weight {layer.weight.shape} / bias {layer.bias.shape}")
            if k and layer.weight.shape[1] != self.layers[k - 1].weight.shape[0]:
                raise ShapeError(
                    f"layer {k} expects {layer.weight.shape[1]} inputs, "
                    f"layer {k - 1} gives {self.layers[k - 1].weight.shape[0]}"
                )
        if self.layers and self.layers[-1].weight.shape[0] != 1:
            raise ShapeError("final layer must have a single output")

    @property
    def d_in(self):
        return self.layers[0].weight.shape[1]

    @property
    def sizes(self):
        return [self.d_in] + [layer.weight.shape[0] for layer in self.layers]

    @property
    def n_params(self):
        return sum(layer.weight.size + layer.bias.size for layer in self.layers)

    def copy(self):
        return MlpParams([Layer(l.weight.copy(), l.bias.copy()) for l in self.layers], self.activation)

    def zeros_like(self):
        return MlpParams(
            [Layer(np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in self.layers],
            self.activation,
        )

    def arrays(self):
        """Flat list ``[W0, b0, W1, b1, ...]`` of views into the parameters."""
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out


@dataclass
class ForwardCache:
    pre: list  # pre-activations z_k, one per layer, (batch, d_out_k)
    post: list  # inputs to each layer: post[0] is X, post[k] = act(pre[k-1])
    n_params_sig: tuple = ()


def init_mlp(sizes, activation="relu", rng=None):
    """Kaiming-uniform initialization for ``sizes = [d_in, h1, ..., 1]``.

    Hidden layers use bound sqrt(6 / fan_in); the affine output layer uses
    gain 1, i.e. sqrt(3 / fan_in). Biases start at zero.
    """
    rng = np.random.default_rng(rng)
    layers = []
    for k, (d_in, d_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        last = k == len(sizes) - 2
        bound = np.sqrt((3.0 if last else 6.0) / d_in)
        W = rng.uniform(-bound, bound, size=(d_out, d_in))
        layers.append(Layer(W, np.zeros(d_out)))
    return MlpParams(layers, activation)


def _act(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    return z * expit(z)


def _act_grad(z, kind):
    if kind == "relu":
        # subgradient at 0 taken as 0
        return (z > 0.0).astype(z.dtype)
    s = expit(z)
    return s + z * s * (1.0 - s)


def _signature(params):
    return tuple(layer.weight.shape for layer in params.layers)


def mlp_forward(params: MlpParams, X):
    """Evaluate the network on a batch.

    Returns the outputs as a 1-D array of length ``batch`` and the cache
    needed by :func:`mlp_backward`.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.d_in:
        raise ShapeError(f"input shape {X.shape}, network expects (batch, {params.d_in})")
    pre, post = [], [X]
    a = X
    n = len(params.layers)
    for k, layer in enumerate(params.layers):
        z = a @ layer.weight.T
        z += layer.bias
        pre.append(z)
        if k < n - 1:
            a = _act(z, params.activation)
            post.append(a)
    return pre[-1][:, 0].copy(), ForwardCache(pre, post, _signature(params))


def mlp_backward(params: MlpParams, cache: ForwardCache, dL_dy, need_params=True):
    """Reverse pass for ``L = sum_i dL_dy[i] * y[i]``.

    Returns ``(param_grads, input_grads)``. With ``need_params=False`` the
    weight gradients are skipped and ``param_grads`` is None, which is what
    score evaluation wants.
    """
    if cache.n_params_sig != _signature(params):
        raise ShapeError("cache was produced by a network with different shapes")
    batch = cache.post[0].shape[0]
    g = np.asarray(dL_dy, dtype=np.float64).reshape(-1)
    if g.shape[0] != batch:
        raise ShapeError(f"dL_dy has length {g.shape[0]}, batch is {batch}")
    delta = g[:, None]
    grads = [] if need_params else None
    n = len(params.layers)
    for k in range(n - 1, -1, -1):
        layer = params.layers[k]
        a_in = cache.post[k]
        if need_params:
            grads.append(Layer(delta.T @ a_in, delta.sum(axis=0)))
        back = delta @ layer.weight
        if k > 0:
            back *= _act_grad(cache.pre[k - 1], params.activation)
        delta = back
    if need_params:
        grads.reverse()
        grads = MlpParams(grads, params.activation)
    return grads, delta


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, params: MlpParams, **kw):
        return cls(
            [np.zeros_like(a) for a in params.arrays()],
            [np.zeros_like(a) for a in params.arrays()],
            **kw,
        )


def adam_step(params: MlpParams, grads: MlpParams, state: AdamState, lr, weight_decay=0.0):
    """One Adam update with decoupled weight decay, in place.

    Decay is applied as ``p -= lr * weight_decay * p`` before the moment
    update. Returns ``(params, state)`` for chaining.
    """
    p_arrays = params.arrays()
    g_arrays = grads.arrays()
    if len(p_arrays) != len(g_arrays):
        raise ShapeError("gradient structure does not match parameters")
    for idx, g in enumerate(g_arrays):
        if g.shape != p_arrays[idx].shape:
            raise ShapeError(f"gradient {idx} has shape {g.shape}, parameter {p_arrays[idx].shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in layer {idx // 2}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(p_arrays, g_arrays, state.m, state.v):
        if weight_decay:
            p -= lr * weight_decay * p
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def params_to_record(params: MlpParams):
    return {
        "format": RECORD_FORMAT,
        "version": RECORD_VERSION,
        "activation": params.activation,
        "layers": [
            {
                "shape": list(layer.weight.shape),
                "weight": layer.weight.ravel().tolist(),
                "bias": layer.bias.tolist(),
            }
            for layer in params.layers
        ],
    }


def params_from_record(rec):
    if rec.get("format") != RECORD_FORMAT:
        raise ValueError(f"not a {RECORD_FORMAT} record")
    if rec.get("version") != RECORD_VERSION:
        raise ValueError(f"unsupported record version {rec.get('version')}")
    layers = []
    for k, entry in enumerate(rec["layers"]):
        d_out, d_in = entry["shape"]
        W = np.asarray(entry["weight"], dtype=np.float64)
        if W.size != d_out * d_in:
            raise ShapeError(f"layer {k}: {W.size} weights for shape {(d_out, d_in)}")
        layers.append(Layer(W.reshape(d_out, d_in), np.asarray(entry["bias"], dtype=np.float64)))
    return MlpParams(layers, rec["activation"])


def dumps(params: MlpParams):
    return json.dumps(params_to_record(params))


def loads(text):
    return params_from_record(json.loads(text))
