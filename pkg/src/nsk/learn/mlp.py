"""Fully connected binary classifier: Dense -> BatchNorm -> ReLU -> Dropout per
hidden layer, sigmoid output, BCE loss with L1/L2 kernel penalties, Adam."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BN_EPS = 1e-5
BN_MOMENTUM = 0.9


@dataclass
class MlpParams:
    """Weights as a flat dict of arrays; keys W{i}, b{i}, gamma{i}, beta{i},
    mean{i}, var{i} (the last two are running statistics, not trained)."""

    arrays: dict = field(default_factory=dict)
    n_hidden: int = 0

    def trainable(self) -> list[str]:
        keys = []
        for i in range(self.n_hidden):
            keys += [f"W{i}", f"b{i}", f"gamma{i}", f"beta{i}"]
        keys += [f"W{self.n_hidden}", f"b{self.n_hidden}"]
        return keys

    def copy(self) -> "MlpParams":
        return MlpParams({k: v.copy() for k, v in self.arrays.items()}, self.n_hidden)


def init_params(d: int, hidden=(64, 32, 16), rng=None) -> MlpParams:
    """Glorot-uniform kernels, zero biases, unit BN scale, zero BN shift."""
    rng = np.random.default_rng(rng)
    sizes = [d, *hidden, 1]
    arrays = {}
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        arrays[f"W{i}"] = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        arrays[f"b{i}"] = np.zeros(fan_out)
        if i < len(hidden):
            arrays[f"gamma{i}"] = np.ones(fan_out)
            arrays[f"beta{i}"] = np.zeros(fan_out)
            arrays[f"mean{i}"] = np.zeros(fan_out)
            arrays[f"var{i}"] = np.ones(fan_out)
    return MlpParams(arrays, len(hidden))


def layer_shapes(p: MlpParams) -> list[tuple[int, int]]:
    return [p.arrays[f"W{i}"].shape for i in range(p.n_hidden + 1)]


def sigmoid(z):
    return np.where(z >= 0, 1 / (1 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1 + np.exp(-np.abs(z))))


def forward(p: MlpParams, X, train: bool = False, dropout: float = 0.0, rng=None):
    """Returns (logits, cache). ``train`` selects batch statistics for BN;
    dropout is applied only when ``train`` and ``dropout > 0``."""
    a = np.asarray(X, dtype=np.float64)
    cache = []
    A = p.arrays
    for i in range(p.n_hidden):
        z = a @ A[f"W{i}"] + A[f"b{i}"]
        if train:
            mu = z.mean(axis=0)
            var = z.var(axis=0)
        else:
            mu, var = A[f"mean{i}"], A[f"var{i}"]
        inv = 1.0 / np.sqrt(var + BN_EPS)
        zhat = (z - mu) * inv
        u = A[f"gamma{i}"] * zhat + A[f"beta{i}"]
        h = np.maximum(u, 0.0)
        mask = None
        if train and dropout > 0:
            mask = (rng.random(h.shape) >= dropout) / (1.0 - dropout)
            h = h * mask
        cache.append({"a": a, "z": z, "mu": mu, "var": var, "inv": inv, "zhat": zhat,
                      "u": u, "mask": mask, "train": train})
        a = h
    logits = a @ A[f"W{p.n_hidden}"] + A[f"b{p.n_hidden}"]
    cache.append({"a": a})
    return logits[:, 0], cache


def penalty(p: MlpParams, l1: float, l2: float) -> float:
    return sum(l1 * np.abs(p.arrays[f"W{i}"]).sum() + l2 * np.sum(p.arrays[f"W{i}"] ** 2)
               for i in range(p.n_hidden + 1))


def loss(p: MlpParams, X, y, l1: float = 0.0, l2: float = 0.0, train: bool = False,
         dropout: float = 0.0, rng=None) -> float:
    logits, _ = forward(p, X, train, dropout, rng)
    return bce_with_logits(logits, y) + penalty(p, l1, l2)


def bce_with_logits(logits, y) -> float:
    y = np.asarray(y, dtype=np.float64)
    # log(1+exp(z)) - y z, stable for either sign
    return float(np.mean(np.maximum(logits, 0) - logits * y + np.log1p(np.exp(-np.abs(logits)))))


def backward(p: MlpParams, cache, logits, y, l1: float = 0.0, l2: float = 0.0) -> dict:
    """Gradients of mean BCE + penalties for every trainable array."""
    y = np.asarray(y, dtype=np.float64)
    n = y.size
    A = p.arrays
    grads = {}
    L = p.n_hidden
    dlogit = (sigmoid(logits) - y)[:, None] / n
    a = cache[L]["a"]
    grads[f"W{L}"] = a.T @ dlogit
    grads[f"b{L}"] = dlogit.sum(axis=0)
    da = dlogit @ A[f"W{L}"].T
    for i in reversed(range(L)):
        c = cache[i]
        dh = da * c["mask"] if c["mask"] is not None else da
        du = dh * (c["u"] > 0)
        grads[f"gamma{i}"] = np.sum(du * c["zhat"], axis=0)
        grads[f"beta{i}"] = du.sum(axis=0)
        dzhat = du * A[f"gamma{i}"]
        if c["train"]:
            m = dzhat.shape[0]
            dz = c["inv"] / m * (m * dzhat - dzhat.sum(axis=0)
                                 - c["zhat"] * np.sum(dzhat * c["zhat"], axis=0))
        else:
            dz = dzhat * c["inv"]
        grads[f"W{i}"] = c["a"].T @ dz
        grads[f"b{i}"] = dz.sum(axis=0)
        da = dz @ A[f"W{i}"].T
    for i in range(L + 1):
        W = A[f"W{i}"]
        grads[f"W{i}"] = grads[f"W{i}"] + l1 * np.sign(W) + 2 * l2 * W
    return grads


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, p: MlpParams, grads: dict) -> None:
        self.t += 1
        for k, g in grads.items():
            m = self.m.get(k, np.zeros_like(g))
            v = self.v.get(k, np.zeros_like(g))
            m = self.beta1 * m + (1 - self.beta1) * g
            v = self.beta2 * v + (1 - self.beta2) * g * g
            self.m[k], self.v[k] = m, v
            m_hat = m / (1 - self.beta1 ** self.t)
            v_hat = v / (1 - self.beta2 ** self.t)
            p.arrays[k] = p.arrays[k] - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def update_running_stats(p: MlpParams, cache) -> None:
    for i in range(p.n_hidden):
        c = cache[i]
        p.arrays[f"mean{i}"] = BN_MOMENTUM * p.arrays[f"mean{i}"] + (1 - BN_MOMENTUM) * c["mu"]
        p.arrays[f"var{i}"] = BN_MOMENTUM * p.arrays[f"var{i}"] + (1 - BN_MOMENTUM) * c["var"]


def train(X, y, hidden=(64, 32, 16), epochs: int = 10, batch: int = 32, dropout: float = 0.5,
          l1: float = 0.005, l2: float = 0.001, lr: float = 1e-3, seed=0):
    """Mini-batch Adam. Returns (params, per-epoch mean training loss).

    Batches are reshuffled every epoch; with fewer rows than ``batch`` the whole
    set is one batch. A trailing batch of a single row is merged into the
    previous one, since batch statistics of one sample are degenerate.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    rng = np.random.default_rng(seed)
    p = init_params(d, hidden, rng)
    opt = AdamState(lr=lr)
    history = []
    for _ in range(epochs):
        order = rng.permutation(n)
        bounds = list(range(0, n, batch)) + [n]
        if len(bounds) > 2 and bounds[-1] - bounds[-2] < 2:
            bounds.pop(-2)
        losses = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            idx = order[lo:hi]
            logits, cache = forward(p, X[idx], True, dropout, rng)
            losses.append(bce_with_logits(logits, y[idx]) + penalty(p, l1, l2))
            grads = backward(p, cache, logits, y[idx], l1, l2)
            update_running_stats(p, cache)
            opt.step(p, grads)
        history.append(float(np.mean(losses)))
    return p, history


def predict_proba(p: MlpParams, X) -> np.ndarray:
    logits, _ = forward(p, X, train=False)
    return sigmoid(logits)
