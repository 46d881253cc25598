"""Dense dueling Q-network with hand-written backpropagation.

Layout: a ReLU trunk of fully connected layers feeding two linear heads, a
scalar state value ``v`` and per-action advantages ``A``, recombined as
``q = v + A - mean(A)``. Weights are stored ``(fan_in, fan_out)`` so a batch
``X`` of shape ``(B, d)`` flows as ``X @ W + b``.
"""
from __future__ import annotations

import base64
import copy
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError

CHECKPOINT_FORMAT = "avgreward-dueling-params"
CHECKPOINT_VERSION = 1


@dataclass(eq=False)
class NetworkParameters:
    """Trunk layers followed by the value head and the advantage head."""

    weights: list
    biases: list

    @property
    def n_trunk(self):
        return len(self.weights) - 2

    @property
    def input_dim(self):
        return self.weights[0].shape[0]

    @property
    def num_actions(self):
        return self.weights[-1].shape[1]

    def tensors(self):
        """Parameter arrays in a fixed order (W0, b0, W1, b1, ...)."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend((W, b))
        return out

    def copy(self):
        return NetworkParameters([W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def allclose(self, other, atol=0.0):
        return all(a.shape == b.shape and np.allclose(a, b, rtol=0.0, atol=atol)
                   for a, b in zip(self.tensors(), other.tensors()))

    def zeros_like(self):
        return NetworkParameters([np.zeros_like(W) for W in self.weights],
                                 [np.zeros_like(b) for b in self.biases])


# Gradients share the parameter layout.
GradientSet = NetworkParameters


def _layer_dims(input_dim, hidden, num_actions):
    dims = [input_dim, *hidden]
    shapes = list(zip(dims[:-1], dims[1:]))
    last = dims[-1]
    return shapes + [(last, 1), (last, num_actions)]


def init_params(input_dim, num_actions, hidden=(64, 64), rng=None, seed=0):
    """Uniform fan-in initialisation: entries in ``±1/sqrt(fan_in)``."""
    rng = np.random.default_rng(seed) if rng is None else rng
    weights, biases = [], []
    for fan_in, fan_out in _layer_dims(input_dim, hidden, num_actions):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return NetworkParameters(weights, biases)


def zero_params(input_dim, num_actions, hidden=(64, 64)):
    shapes = _layer_dims(input_dim, hidden, num_actions)
    return NetworkParameters([np.zeros(s) for s in shapes], [np.zeros(s[1]) for s in shapes])


def _as_batch(params, features):
    X = np.asarray(features, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != params.input_dim:
        raise ContractError(
            f"features of shape {np.shape(features)} do not match input dimension {params.input_dim}")
    return X, single


def _forward_cache(params, X):
    acts = [X]
    pre = []
    h = X
    for W, b in zip(params.weights[:-2], params.biases[:-2]):
        z = h @ W + b
        pre.append(z)
        h = np.maximum(z, 0.0)
        acts.append(h)
    v = h @ params.weights[-2] + params.biases[-2]
    adv = h @ params.weights[-1] + params.biases[-1]
    q = v + (adv - adv.mean(axis=1, keepdims=True))
    return q, acts, pre


def forward(params, features):
    """Action values for one feature vector ``(d,)`` or a batch ``(B, d)``."""
    X, single = _as_batch(params, features)
    q, _, _ = _forward_cache(params, X)
    return q[0] if single else q


def backward_batch(params, features, actions, targets):
    """Loss ``0.5 * mean_i (q_i[a_i] - y_i)^2`` and its exact gradient."""
    X, _ = _as_batch(params, features)
    actions = np.asarray(actions, dtype=np.int64).reshape(-1)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    B = X.shape[0]
    if actions.shape[0] != B or targets.shape[0] != B:
        raise ContractError("features, actions and targets must have the same batch size")
    if np.any(actions < 0) or np.any(actions >= params.num_actions):
        raise ContractError("action index out of range")
    q, acts, pre = _forward_cache(params, X)
    rows = np.arange(B)
    err = q[rows, actions] - targets
    loss = 0.5 * float(np.mean(err**2))

    dq = np.zeros_like(q)
    dq[rows, actions] = err / B
    dv = dq.sum(axis=1, keepdims=True)
    dadv = dq - dq.mean(axis=1, keepdims=True)
    h = acts[-1]
    gW = [None] * len(params.weights)
    gb = [None] * len(params.biases)
    gW[-2], gb[-2] = h.T @ dv, dv.sum(axis=0)
    gW[-1], gb[-1] = h.T @ dadv, dadv.sum(axis=0)
    dh = dv @ params.weights[-2].T + dadv @ params.weights[-1].T
    for i in range(params.n_trunk - 1, -1, -1):
        dz = dh * (pre[i] > 0.0)
        gW[i] = acts[i].T @ dz
        gb[i] = dz.sum(axis=0)
        dh = dz @ params.weights[i].T
    return loss, NetworkParameters(gW, gb)


def backward(params, features, action, target):
    """Single-sample loss ``0.5 * (q[action] - target)^2`` and its gradient."""
    return backward_batch(params, np.asarray(features, dtype=np.float64)[None, :],
                          [action], [target])


class Sgd:
    def __init__(self, lr=1e-3):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params.tensors(), grads.tensors()):
            p -= self.lr * g
        return params


class Adam:
    """Adaptive moment estimation with bias correction."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params, grads):
        tensors = params.tensors()
        gs = grads.tensors()
        if self.m is None:
            self.m = [np.zeros_like(p) for p in tensors]
            self.v = [np.zeros_like(p) for p in tensors]
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(tensors, gs, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return params


def make_optimizer(name, lr):
    if name == "sgd":
        return Sgd(lr)
    if name == "adam":
        return Adam(lr)
    raise ContractError(f"unknown optimizer {name!r}")


def optimizer_step(params, grads, optimizer, lr=None):
    """Apply one optimiser update in place; ``lr`` overrides the optimiser's rate."""
    if len(params.tensors()) != len(grads.tensors()) or any(
            p.shape != g.shape for p, g in zip(params.tensors(), grads.tensors())):
        raise ContractError("gradients are not shape-congruent with parameters")
    if lr is not None:
        optimizer.lr = lr
    return optimizer.step(params, grads)


def sync_target(online):
    """Independent deep copy used as the slowly refreshed target network."""
    return copy.deepcopy(online)


def save_params(params, path):
    """Write a JSON checkpoint; tensors are base64 little-endian float64."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "tensors": [
            {"name": f"{kind}{i}", "shape": list(arr.shape), "dtype": "<f8",
             "data": base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode()}
            for i, (W, b) in enumerate(zip(params.weights, params.biases))
            for kind, arr in (("W", W), ("b", b))
        ],
    }
    Path(path).write_text(json.dumps(doc))


def load_params(path):
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ContractError(f"not a parameter checkpoint: {path}")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ContractError(f"unsupported checkpoint version {doc.get('version')}")
    arrays = []
    for t in doc["tensors"]:
        raw = base64.b64decode(t["data"])
        arrays.append(np.frombuffer(raw, dtype=t["dtype"]).astype(np.float64).reshape(t["shape"]))
    return NetworkParameters(arrays[0::2], arrays[1::2])
