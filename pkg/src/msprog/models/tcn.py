"""Temporal convolutional network: dilated causal conv residual blocks.

Each level runs two causal convolutions (kernel k, dilation 2^level) with
ReLUs, dropout, and a residual connection (1x1 projection when channel
counts differ); the head is a dense layer on the last timestep. Causality is
structural: output at time t never touches inputs after t, and the receptive
field is 1 + 2(k-1) * sum(dilations).

Forward/backward run on the compiled conv kernels when available. Training is
mini-batch Adam with early stopping, mirroring the MLP.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import _kernels
from .._util import rng_stream
from .losses import LossSpec, grad_logits, loss_value, softmax
from .optim import Adam


@dataclass(frozen=True)
class TCNConfig:
    n_in: int
    n_out: int
    num_filters: int = 16
    kernel_size: int = 3
    levels: int = 3
    dropout: float = 0.0

    @property
    def dilations(self) -> tuple[int, ...]:
        return tuple(2 ** i for i in range(self.levels))


def receptive_field(kernel_size: int, levels: int) -> int:
    return 1 + 2 * (kernel_size - 1) * sum(2 ** i for i in range(levels))


def init_tcn(cfg: TCNConfig, seed: int) -> list[np.ndarray]:
    """Parameter list: per level [w1, b1, w2, b2, (proj)], then [Wd, bd]."""
    rng = rng_stream(seed, 303)
    params: list[np.ndarray] = []
    c_in = cfg.n_in
    k, c = cfg.kernel_size, cfg.num_filters
    for _level in range(cfg.levels):
        params.append(rng.normal(0.0, np.sqrt(2.0 / (k * c_in)), size=(k, c_in, c)))
        params.append(np.zeros(c))
        params.append(rng.normal(0.0, np.sqrt(2.0 / (k * c)), size=(k, c, c)))
        params.append(np.zeros(c))
        if c_in != c:
            params.append(rng.normal(0.0, np.sqrt(1.0 / c_in), size=(c_in, c)))
        c_in = c
    params.append(rng.normal(0.0, np.sqrt(1.0 / c), size=(c, cfg.n_out)))
    params.append(np.zeros(cfg.n_out))
    return params


def _level_params(params: list[np.ndarray], cfg: TCNConfig):
    """Yield (level, dilation, w1, b1, w2, b2, proj_or_None)."""
    p = 0
    c_in = cfg.n_in
    for level in range(cfg.levels):
        w1, b1, w2, b2 = params[p], params[p + 1], params[p + 2], params[p + 3]
        p += 4
        proj = None
        if c_in != cfg.num_filters:
            proj = params[p]
            p += 1
        yield level, 2 ** level, w1, b1, w2, b2, proj
        c_in = cfg.num_filters


def _forward(params, cfg: TCNConfig, X, dropout_masks=None):
    """Returns (logits/raw output, caches for backward)."""
    h = np.ascontiguousarray(X, dtype=np.float64)
    caches = []
    for level, d, w1, b1, w2, b2, proj in _level_params(params, cfg):
        z1 = _kernels.conv1d_fwd(h, w1, b1, d)
        a1 = np.maximum(z1, 0.0)
        m1 = m2 = None
        if dropout_masks is not None:
            m1, m2 = dropout_masks[level]
            a1 = a1 * m1
        z2 = _kernels.conv1d_fwd(np.ascontiguousarray(a1), w2, b2, d)
        res = h if proj is None else h @ proj
        s = z2 + res
        a2 = np.maximum(s, 0.0)
        if dropout_masks is not None:
            a2 = a2 * m2
        caches.append((h, z1, a1, s, m1, m2))
        h = a2
    Wd, bd = params[-2], params[-1]
    out = h[:, -1, :] @ Wd + bd
    caches.append(h)
    return out, caches


def tcn_forward(params: list[np.ndarray], cfg: TCNConfig, X: np.ndarray) -> np.ndarray:
    """Evaluation-mode forward; X is (n, T, F) or a single (T, F) sequence.

    Returns the raw head output (logits for classification tasks).
    """
    single = X.ndim == 2
    if single:
        X = X[None, :, :]
    out, _ = _forward(params, cfg, X)
    return out[0] if single else out


def loss_and_grads(params: list[np.ndarray], cfg: TCNConfig, X: np.ndarray,
                   y: np.ndarray, loss: LossSpec, task_kind: str,
                   dropout_masks=None):
    out, caches = _forward(params, cfg, X, dropout_masks)
    n = len(X)
    if task_kind == "regression":
        pred = out[:, 0]
        value = loss_value(loss, pred, y)
        d_out = (2.0 * (pred - y) / n)[:, None]
    else:
        probs = softmax(out)
        value = loss_value(loss, probs, y)
        d_out = grad_logits(loss, probs, y)

    grads = [np.zeros_like(p) for p in params]
    h_final = caches[-1]
    Wd = params[-2]
    grads[-2] = h_final[:, -1, :].T @ d_out
    grads[-1] = d_out.sum(axis=0)
    dh = np.zeros_like(h_final)
    dh[:, -1, :] = d_out @ Wd.T

    level_specs = list(_level_params(params, cfg))
    p = 0
    slots = []  # parameter positions per level
    for _level, _d, _w1, _b1, _w2, _b2, proj in level_specs:
        slots.append((p, proj is not None))
        p += 5 if proj is not None else 4

    for level in reversed(range(cfg.levels)):
        _lv, d, w1, b1, w2, b2, proj = level_specs[level]
        h_in, z1, a1, s, m1, m2 = caches[level]
        da2 = dh if m2 is None else dh * m2
        ds = da2 * (s > 0.0)
        da1, dw2, db2 = _kernels.conv1d_bwd(np.ascontiguousarray(a1), w2,
                                            np.ascontiguousarray(ds), d)
        if m1 is not None:
            da1 = da1 * m1
        dz1 = da1 * (z1 > 0.0)
        dh_conv, dw1, db1 = _kernels.conv1d_bwd(h_in, w1,
                                                np.ascontiguousarray(dz1), d)
        base, has_proj = slots[level]
        grads[base], grads[base + 1] = dw1, db1
        grads[base + 2], grads[base + 3] = dw2, db2
        if has_proj:
            grads[base + 4] = np.tensordot(h_in, ds, axes=([0, 1], [0, 1]))
            dh = dh_conv + ds @ proj.T
        else:
            dh = dh_conv + ds
    return value, grads


def _sample_masks(rng, cfg: TCNConfig, shape_t: int, n: int):
    if cfg.dropout <= 0.0:
        return None
    keep = 1.0 - cfg.dropout
    masks = []
    for _ in range(cfg.levels):
        m1 = (rng.random((n, shape_t, cfg.num_filters)) < keep) / keep
        m2 = (rng.random((n, shape_t, cfg.num_filters)) < keep) / keep
        masks.append((m1, m2))
    return masks


def tcn_output(params, cfg: TCNConfig, X: np.ndarray, task_kind: str) -> np.ndarray:
    out = tcn_forward(params, cfg, X)
    if task_kind == "regression":
        return out
    return softmax(out)


def fit_tcn(X: np.ndarray, y: np.ndarray, cfg: TCNConfig, task_kind: str,
            loss: LossSpec, learning_rate: float = 0.001, batch_size: int = 64,
            epochs: int = 100, patience: int = 10, seed: int = 0):
    """Mini-batch Adam with early stop; returns (params, metadata)."""
    rng = rng_stream(seed, 404)
    n = len(X)
    order = rng.permutation(n)
    n_val = max(1, n // 10) if n >= 10 else 0
    val_idx, train_idx = order[:n_val], order[n_val:]
    if len(train_idx) == 0:
        train_idx = order
        val_idx = order
    Xt, yt = X[train_idx], y[train_idx]
    Xv, yv = X[val_idx], y[val_idx]

    params = init_tcn(cfg, seed)
    opt = Adam(params, lr=learning_rate)
    best = [p.copy() for p in params]
    best_val = np.inf
    bad_epochs = 0
    epochs_run = 0
    T = X.shape[1]
    for epoch in range(epochs):
        epochs_run = epoch + 1
        idx = rng.permutation(len(Xt))
        for start in range(0, len(idx), batch_size):
            batch = idx[start:start + batch_size]
            masks = _sample_masks(rng, cfg, T, len(batch))
            _, grads = loss_and_grads(params, cfg, Xt[batch], yt[batch],
                                      loss, task_kind, masks)
            opt.step(params, grads)
        val_out = tcn_output(params, cfg, Xv, task_kind)
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
