"""Fully connected ReLU network with hand-written backprop and Adam.

Weights are stored ``(out, in)`` so a batch ``X`` of shape ``(B, in)`` maps to
``X @ W.T + b``.  Everything is float64 and deterministic for a given seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError

HIDDEN = (256, 256)


@dataclass(frozen=True, eq=False)
class MlpParams:
    weights: tuple  # of (out, in) arrays
    biases: tuple  # of (out,) arrays

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise DimensionError("weights and biases must be non-empty and of equal length")
        prev = self.weights[0].shape[1]
        for W, b in zip(self.weights, self.biases):
            if W.ndim != 2 or W.shape[1] != prev or b.shape != (W.shape[0],):
                raise DimensionError(f"inconsistent layer shapes {W.shape}, {b.shape}")
            prev = W.shape[0]

    @property
    def k(self) -> int:
        return self.weights[0].shape[1]

    @property
    def n(self) -> int:
        return self.weights[-1].shape[0]

    def arrays(self) -> list:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    @classmethod
    def from_arrays(cls, arrs) -> "MlpParams":
        return cls(tuple(arrs[0::2]), tuple(arrs[1::2]))

    def to_json(self) -> dict:
        return {
            "layers": [
                {"shape": list(W.shape), "W": W.ravel().tolist(), "b": b.tolist()}
                for W, b in zip(self.weights, self.biases)
            ]
        }

    @classmethod
    def from_json(cls, d) -> "MlpParams":
        if isinstance(d, str):
            d = json.loads(d)
        Ws, bs = [], []
        for layer in d["layers"]:
            Ws.append(np.asarray(layer["W"], dtype=np.float64).reshape(layer["shape"]))
            bs.append(np.asarray(layer["b"], dtype=np.float64))
        return cls(tuple(Ws), tuple(bs))


def init_mlp(k: int, n: int, seed: int, hidden=HIDDEN) -> MlpParams:
    """He-uniform weights, zero biases."""
    if k < 1 or n < 1:
        raise ValueError("k and n must be positive")
    rng = np.random.default_rng(seed)
    sizes = [k, *hidden, n]
    Ws, bs = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        lim = np.sqrt(6.0 / fan_in)
        Ws.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
        bs.append(np.zeros(fan_out))
    return MlpParams(tuple(Ws), tuple(bs))


@dataclass
class Cache:
    inputs: list  # input to each layer
    pre: list  # pre-activations of hidden layers
    single: bool = False


def forward(p: MlpParams, x):
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.shape[1] != p.k:
        raise DimensionError(f"input has length {X.shape[1]}, network expects {p.k}")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite input")
    inputs, pre = [], []
    h = X
    last = len(p.weights) - 1
    for i, (W, b) in enumerate(zip(p.weights, p.biases)):
        inputs.append(h)
        z = h @ W.T + b
        if i < last:
            pre.append(z)
            h = np.maximum(z, 0.0)
        else:
            h = z
    out = h[0] if single else h
    return out, Cache(inputs, pre, single)


def backward(p: MlpParams, cache: Cache, d_out) -> list:
    """Gradients ``[dW0, db0, dW1, db1, ...]`` of ``sum(d_out * output)``."""
    D = np.asarray(d_out, dtype=np.float64)
    if cache.single:
        D = D[None, :]
    if D.shape != (cache.inputs[0].shape[0], p.n):
        raise DimensionError(f"output gradient has shape {D.shape}, expected {(cache.inputs[0].shape[0], p.n)}")
    grads = [None] * (2 * len(p.weights))
    for i in range(len(p.weights) - 1, -1, -1):
        grads[2 * i] = D.T @ cache.inputs[i]
        grads[2 * i + 1] = D.sum(axis=0)
        if i > 0:
            D = (D @ p.weights[i]) * (cache.pre[i - 1] > 0.0)
    return grads


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, p: MlpParams) -> "AdamState":
        arrs = p.arrays()
        return cls([np.zeros_like(a) for a in arrs], [np.zeros_like(a) for a in arrs])


def adam_step(p: MlpParams, grads, state: AdamState, lr: float):
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    new = []
    for a, g, m, v in zip(p.arrays(), grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        new.append(a - lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
    return MlpParams.from_arrays(new), state


@dataclass
class TrainConfig:
    epochs: int = 100
    lr: float = 1e-4
    batch_size: int = 64
    seed: int = 0
    pretrain_epochs: int = 0
    mode: str = "objective"  # or "supervised"
    hidden: tuple = field(default=HIDDEN)

    def __post_init__(self):
        if self.epochs < 0 or self.pretrain_epochs < 0 or self.lr < 0 or self.batch_size < 1:
            raise ValueError("training configuration values must be positive")
        if self.mode not in ("objective", "supervised"):
            raise ValueError(f"unknown training mode {self.mode!r}")
        self.hidden = tuple(self.hidden)


def minibatches(count: int, batch_size: int, rng):
    order = rng.permutation(count)
    for start in range(0, count, batch_size):
        yield order[start:start + batch_size]


def fit(p: MlpParams, X, grad_fn, epochs: int, lr: float, batch_size: int, seed: int) -> MlpParams:
    """Generic loop: ``grad_fn(params, idx) -> grads`` for a minibatch of rows."""
    rng = np.random.default_rng(seed)
    state = AdamState.zeros_like(p)
    for _ in range(epochs):
        for idx in minibatches(X.shape[0], batch_size, rng):
            p, state = adam_step(p, grad_fn(p, idx), state, lr)
    return p


def mse_grad(p: MlpParams, X, T):
    out, cache = forward(p, X)
    D = 2.0 * (out - T) / out.size
    return backward(p, cache, D)


def pretrain_to_safe(p: MlpParams, rule, samples, epochs: int, lr: float = 1e-4, batch_size: int = 64,
                     seed: int = 0) -> MlpParams:
    """Regress the network onto the decision rule ``F x``."""
    X = np.asarray(samples, dtype=np.float64)
    T = X @ rule.F.T
    return fit(p, X, lambda q, idx: mse_grad(q, X[idx], T[idx]), epochs, lr, batch_size, seed)
