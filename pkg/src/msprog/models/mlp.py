"""Multi-layer perceptron with hand-rolled backprop and Adam.

ReLU hidden layers; the head is a single linear output for regression or a
k-way softmax for classification (binary is the k=2 case, which lets the
focal loss share one gradient path). Mini-batch training with early stopping
on an internal validation split.
"""

from __future__ import annotations

import numpy as np

from .._util import rng_stream
from .losses import LossSpec, grad_logits, loss_value, softmax
from .optim import Adam


def init_mlp(n_in: int, hidden: tuple[int, ...], n_out: int, seed: int) -> list[np.ndarray]:
    rng = rng_stream(seed, 101)
    params: list[np.ndarray] = []
    sizes = [n_in, *hidden, n_out]
    for a, b in zip(sizes[:-1], sizes[1:]):
        params.append(rng.normal(0.0, np.sqrt(2.0 / a), size=(a, b)))
        params.append(np.zeros(b))
    return params


def mlp_forward(params: list[np.ndarray], X: np.ndarray):
    """Returns (raw output, list of post-activation caches per layer)."""
    caches = [X]
    h = X
    n_layers = len(params) // 2
    for i in range(n_layers):
        W, b = params[2 * i], params[2 * i + 1]
        z = h @ W + b
        if i < n_layers - 1:
            h = np.maximum(z, 0.0)
            caches.append(h)
        else:
            h = z
    return h, caches


def mlp_output(params: list[np.ndarray], X: np.ndarray, task_kind: str) -> np.ndarray:
    out, _ = mlp_forward(params, X)
    if task_kind == "regression":
        return out
    return softmax(out)


def loss_and_grads(params: list[np.ndarray], X: np.ndarray, y: np.ndarray,
                   loss: LossSpec, task_kind: str):
    out, caches = mlp_forward(params, X)
    n = len(X)
    if task_kind == "regression":
        pred = out[:, 0]
        value = loss_value(loss, pred, y)
        d_out = (2.0 * (pred - y) / n)[:, None]
    else:
        probs = softmax(out)
        value = loss_value(loss, probs, y)
        d_out = grad_logits(loss, probs, y)

    grads: list[np.ndarray] = [np.zeros_like(p) for p in params]
    n_layers = len(params) // 2
    dz = d_out
    for i in reversed(range(n_layers)):
        a_prev = caches[i]
        grads[2 * i] = a_prev.T @ dz
        grads[2 * i + 1] = dz.sum(axis=0)
        if i > 0:
            da = dz @ params[2 * i].T
            dz = da * (caches[i] > 0.0)
    return value, grads


def fit_mlp(X: np.ndarray, y: np.ndarray, hidden: tuple[int, ...], task_kind: str,
            n_out: int, loss: LossSpec, learning_rate: float = 0.001,
            batch_size: int = 64, epochs: int = 100, patience: int = 10,
            seed: int = 0) -> tuple[list[np.ndarray], dict]:
    """Mini-batch Adam with early stopping; returns (params, metadata)."""
    rng = rng_stream(seed, 202)
    n = len(X)
    order = rng.permutation(n)
    n_val = max(1, n // 10) if n >= 10 else 0
    val_idx, train_idx = order[:n_val], order[n_val:]
    if len(train_idx) == 0:
        train_idx = order
        val_idx = order
    Xt, yt = X[train_idx], y[train_idx]
    Xv, yv = (X[val_idx], y[val_idx]) if n_val else (Xt, yt)

    params = init_mlp(X.shape[1], hidden, n_out, seed)
    opt = Adam(params, lr=learning_rate)
    best = [p.copy() for p in params]
    best_val = np.inf
    bad_epochs = 0
    epochs_run = 0
    for epoch in range(epochs):
        epochs_run = epoch + 1
        idx = rng.permutation(len(Xt))
        for start in range(0, len(idx), batch_size):
            batch = idx[start:start + batch_size]
            _, grads = loss_and_grads(params, Xt[batch], yt[batch], loss, task_kind)
            opt.step(params, grads)
        val_out = mlp_output(params, Xv, task_kind)
        val_loss = loss_value(loss, val_out if task_kind != "regression" else val_out[:, 0], yv)
        if val_loss < best_val - 1e-12:
            best_val = val_loss
            best = [p.copy() for p in params]
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= patience:
                break
    return best, {"epochs": epochs_run, "val_loss": best_val}
