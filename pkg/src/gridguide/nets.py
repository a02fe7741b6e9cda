"""Small feed-forward policy networks, trained by behavioral cloning.

Everything here is plain numpy in double precision: a ReLU MLP with a
softmax head, its exact backprop gradient, Adam, a mini-batch
cross-entropy fit, and a finite-difference gradient checker.  Double
precision keeps the gradient checks and run-to-run determinism exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

LOG_CLAMP = 1e-12  # floor for log() so a zero predicted probability cannot produce -inf


@dataclass
class MlpParams:
    """Weights and biases of a ReLU MLP with a linear output layer."""

    weights: list  # [in, h1], [h1, h2], ..., [hk, out]
    biases: list

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.weights + self.biases])


def init_params(rng: np.random.Generator, in_dim: int, n_out: int,
                hidden: Sequence[int] = (126, 126)) -> MlpParams:
    """Glorot-uniform weights, zero biases.  Deterministic given the rng."""
    if in_dim < 1 or n_out < 2:
        raise ValueError(f"need in_dim >= 1 and n_out >= 2, got {in_dim}, {n_out}")
    dims = [in_dim, *hidden, n_out]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def forward_logits(params: MlpParams, x: np.ndarray) -> np.ndarray:
    h = x
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        h = np.maximum(h @ w + b, 0.0)
    return h @ params.weights[-1] + params.biases[-1]


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction for overflow safety."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward_probs(params: MlpParams, x: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite network input")
    return softmax(forward_logits(params, x))


def cross_entropy(probs: np.ndarray, target: int) -> float:
    if not 0 <= target < probs.shape[-1]:
        raise ValueError(f"target {target} out of range for {probs.shape[-1]} classes")
    return float(-np.log(max(probs[target], LOG_CLAMP)))


def batch_loss(params: MlpParams, X: np.ndarray, y: np.ndarray) -> float:
    """Mean cross-entropy of the batch."""
    probs = softmax(forward_logits(params, X))
    picked = probs[np.arange(len(y)), y]
    return float(-np.mean(np.log(np.maximum(picked, LOG_CLAMP))))


def loss_and_grad(params: MlpParams, X: np.ndarray, y: np.ndarray):
    """Mean cross-entropy and its exact gradient via backprop.

    Returns (loss, grad_weights, grad_biases) with gradients shaped like
    the parameters.
    """
    n = len(y)
    acts = [X]
    pre = []
    h = X
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        z = h @ w + b
        pre.append(z)
        h = np.maximum(z, 0.0)
        acts.append(h)
    logits = h @ params.weights[-1] + params.biases[-1]
    probs = softmax(logits)
    picked = probs[np.arange(n), y]
    loss = float(-np.mean(np.log(np.maximum(picked, LOG_CLAMP))))

    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grad_w = [None] * len(params.weights)
    grad_b = [None] * len(params.biases)
    for i in range(len(params.weights) - 1, -1, -1):
        grad_w[i] = acts[i].T @ delta
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.weights[i].T) * (pre[i - 1] > 0)
    return loss, grad_w, grad_b


@dataclass
class AdamState:
    """First/second moment accumulators plus hyperparameters."""

    m_w: list
    v_w: list
    m_b: list
    v_b: list
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(params: MlpParams, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    if lr <= 0:
        raise ValueError("lr must be positive")
    return AdamState(
        m_w=[np.zeros_like(w) for w in params.weights],
        v_w=[np.zeros_like(w) for w in params.weights],
        m_b=[np.zeros_like(b) for b in params.biases],
        v_b=[np.zeros_like(b) for b in params.biases],
        t=0, lr=lr, beta1=beta1, beta2=beta2, eps=eps,
    )


def adam_step(params: MlpParams, grad_w: list, grad_b: list, state: AdamState) -> MlpParams:
    """One in-place Adam update with bias correction; mutates state, returns new params."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    new_w, new_b = [], []
    for w, g, m, v in zip(params.weights, grad_w, state.m_w, state.v_w):
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        new_w.append(w - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
    for b, g, m, v in zip(params.biases, grad_b, state.m_b, state.v_b):
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        new_b.append(b - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
    return MlpParams(new_w, new_b)


def bc_fit(X: np.ndarray, y: np.ndarray, params: MlpParams, adam: AdamState,
           epochs: int, batch_size: int, rng: np.random.Generator):
    """Mini-batch cross-entropy fit with per-epoch shuffling.

    Returns (params, last_epoch_mean_loss).  Zero epochs returns the
    input params untouched (loss computed once for reporting).
    """
    n = len(y)
    if n == 0:
        raise ValueError("empty dataset")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if epochs == 0:
        return params, batch_loss(params, X, y)
    loss = 0.0
    for _ in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, batch_size):
            idx = order[lo:lo + batch_size]
            l, gw, gb = loss_and_grad(params, X[idx], y[idx])
            params = adam_step(params, gw, gb, adam)
            total += l * len(idx)
        loss = total / n
    return params, loss


def grad_check(params: MlpParams, X: np.ndarray, y: np.ndarray, h: float = 1e-6) -> float:
    """Max relative error between backprop and central differences.

    Relative error per parameter is |a - n| / max(|a|, |n|, 1e-8).
    """
    _, grad_w, grad_b = loss_and_grad(params, X, y)
    worst = 0.0
    work = params.copy()
    for arrays, grads in ((work.weights, grad_w), (work.biases, grad_b)):
        for arr, g in zip(arrays, grads):
            flat = arr.ravel()
            gflat = g.ravel()
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = batch_loss(work, X, y)
                flat[i] = orig - h
                down = batch_loss(work, X, y)
                flat[i] = orig
                numeric = (up - down) / (2 * h)
                analytic = gflat[i]
                err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
                worst = max(worst, err)
    return worst
