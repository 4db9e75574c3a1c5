"""Training losses: MSE, cross-entropy, and focal loss, with logit gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class LossSpec:
    kind: str = "mse"          # mse | cross_entropy | focal
    gamma: float = 0.0         # focal only
    alpha: float = 1.0         # focal only; scalar weight (per-class via array in focal_loss)

    def __post_init__(self):
        if self.kind not in ("mse", "cross_entropy", "focal"):
            raise ValueError(f"unknown loss {self.kind!r}")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=-1, keepdims=True)


def mse(pred: np.ndarray, target: np.ndarray) -> float:
    d = pred - target
    return float(np.mean(d * d))


def cross_entropy(probs: np.ndarray, y: np.ndarray) -> float:
    """Mean negative log-likelihood; probs (n, k), y integer class indices."""
    p = np.clip(probs[np.arange(len(y)), y], PROB_FLOOR, 1.0)
    return float(-np.mean(np.log(p)))


def focal_loss(probs: np.ndarray, y, gamma: float, alpha=1.0) -> float:
    """FL = -alpha_y * (1 - p_y)^gamma * log(p_y), averaged over the batch.

    Reduces to alpha-weighted cross-entropy at gamma = 0. ``probs`` may be a
    single distribution (k,) with scalar y, or a batch (n, k) with index
    vector y. ``alpha`` is a scalar or a per-class array.
    """
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    ys = np.atleast_1d(np.asarray(y, dtype=np.intp))
    p = np.clip(probs[np.arange(len(ys)), ys], PROB_FLOOR, 1.0)
    a = np.asarray(alpha, dtype=np.float64)
    ay = a[ys] if a.ndim else a
    return float(np.mean(-ay * (1.0 - p) ** gamma * np.log(p)))


def loss_value(spec: LossSpec, output: np.ndarray, y: np.ndarray) -> float:
    """Dispatch on LossSpec; ``output`` is raw prediction (regression) or probs."""
    if spec.kind == "mse":
        return mse(output.reshape(-1), y)
    if spec.kind == "cross_entropy":
        return cross_entropy(output, y.astype(np.intp))
    return focal_loss(output, y.astype(np.intp), spec.gamma, spec.alpha)


def grad_logits(spec: LossSpec, probs: np.ndarray, y: np.ndarray) -> np.ndarray:
    """d(mean loss)/d(logits) for softmax outputs, shape (n, k).

    For cross-entropy this is (p - onehot)/n; the focal version follows from
    dFL/dp_y through the softmax Jacobian.
    """
    n, k = probs.shape
    ys = y.astype(np.intp)
    onehot = np.zeros((n, k))
    onehot[np.arange(n), ys] = 1.0
    if spec.kind == "cross_entropy" or (spec.kind == "focal" and spec.gamma == 0.0):
        scale = spec.alpha if spec.kind == "focal" else 1.0
        return scale * (probs - onehot) / n
    if spec.kind != "focal":
        raise ValueError(f"no logit gradient for loss {spec.kind!r}")
    py = np.clip(probs[np.arange(n), ys], PROB_FLOOR, 1.0)
    one_m = 1.0 - py
    g, a = spec.gamma, spec.alpha
    # dL/dp_y with L = -a (1-p)^g log p
    dl_dpy = a * (g * one_m ** (g - 1.0) * np.log(py) - one_m ** g / py)
    # softmax jacobian: dp_y/dz_k = p_y (delta - p_k)
    dz = dl_dpy[:, None] * py[:, None] * (onehot - probs)
    return dz / n
