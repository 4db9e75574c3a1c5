"""Linear and logistic regression solved from first principles.

Linear regression uses the normal equations with a tiny ridge (1e-8) for
numerical stability. Binary logistic regression runs damped Newton iterations
on the L2-penalized log-likelihood (penalty 1/C, intercept unpenalized);
multiclass uses full-batch softmax regression under Adam. Both are
deterministic for fixed inputs and seed.
"""

from __future__ import annotations

import numpy as np

from .losses import sigmoid, softmax
from .optim import Adam

RIDGE = 1e-8


def fit_linear_regression(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Return theta (F+1,) with the intercept last."""
    A = np.hstack([X, np.ones((len(X), 1))])
    gram = A.T @ A + RIDGE * np.eye(A.shape[1])
    return np.linalg.solve(gram, A.T @ y)


def predict_linear(theta: np.ndarray, X: np.ndarray) -> np.ndarray:
    return X @ theta[:-1] + theta[-1]


def logistic_loss_grad(theta: np.ndarray, X: np.ndarray, y: np.ndarray,
                       l2: float) -> tuple[float, np.ndarray]:
    """Mean penalized log-loss and its gradient; intercept (last coef) unpenalized."""
    n = len(y)
    z = X @ theta[:-1] + theta[-1]
    p = sigmoid(z)
    p_clip = np.clip(p, 1e-12, 1.0 - 1e-12)
    loss = -np.mean(y * np.log(p_clip) + (1.0 - y) * np.log(1.0 - p_clip))
    loss += 0.5 * l2 * float(theta[:-1] @ theta[:-1]) / n
    err = (p - y) / n
    grad = np.empty_like(theta)
    grad[:-1] = X.T @ err + l2 * theta[:-1] / n
    grad[-1] = err.sum()
    return float(loss), grad


def fit_logistic_binary(X: np.ndarray, y: np.ndarray, C: float = 1.0,
                        max_iter: int = 100, tol: float = 1e-10) -> tuple[np.ndarray, bool]:
    """Damped Newton on the penalized log-loss; returns (theta, converged)."""
    n, f = X.shape
    l2 = 1.0 / C
    A = np.hstack([X, np.ones((n, 1))])
    theta = np.zeros(f + 1)
    loss, _ = logistic_loss_grad(theta, X, y, l2)
    for _ in range(max_iter):
        p = sigmoid(A @ theta)
        w = np.maximum(p * (1.0 - p), 1e-12)
        grad = A.T @ ((p - y) / n)
        grad[:-1] += l2 * theta[:-1] / n
        hess = (A.T * w) @ A / n
        hess[:-1, :-1] += l2 * np.eye(f) / n
        hess += 1e-12 * np.eye(f + 1)
        step = np.linalg.solve(hess, grad)
        # backtracking keeps Newton monotone on near-separable data
        scale = 1.0
        for _bt in range(30):
            cand = theta - scale * step
            new_loss, _ = logistic_loss_grad(cand, X, y, l2)
            if new_loss <= loss + 1e-15:
                break
            scale *= 0.5
        theta = theta - scale * step
        if abs(loss - new_loss) < tol:
            return theta, True
        loss = new_loss
    return theta, False


def predict_logistic(theta: np.ndarray, X: np.ndarray) -> np.ndarray:
    return sigmoid(X @ theta[:-1] + theta[-1])


def fit_softmax(X: np.ndarray, y: np.ndarray, n_classes: int, C: float = 1.0,
                lr: float = 0.1, epochs: int = 500, seed: int = 0) -> np.ndarray:
    """Full-batch softmax regression; returns theta (F+1, k), intercept row last."""
    n, f = X.shape
    l2 = 1.0 / C
    A = np.hstack([X, np.ones((n, 1))])
    theta = np.zeros((f + 1, n_classes))
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y.astype(np.intp)] = 1.0
    opt = Adam([theta], lr=lr)
    for _ in range(epochs):
        probs = softmax(A @ theta)
        grad = A.T @ (probs - onehot) / n
        grad[:-1] += l2 * theta[:-1] / n
        opt.step([theta], [grad])
    return theta


def predict_softmax(theta: np.ndarray, X: np.ndarray) -> np.ndarray:
    A = np.hstack([X, np.ones((len(X), 1))])
    return softmax(A @ theta)
