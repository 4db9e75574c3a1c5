"""Central-difference gradient checks guarding the backprop implementations."""

from __future__ import annotations

import numpy as np

from .._util import rng_stream
from . import mlp as mlp_mod
from . import tcn as tcn_mod
from .linear import logistic_loss_grad
from .losses import LossSpec


def _max_rel_error(params: list[np.ndarray], analytic: list[np.ndarray],
                   loss_at, rng, step: float, n_coords: int) -> float:
    flat_sizes = [p.size for p in params]
    total = sum(flat_sizes)
    if total <= n_coords:
        coords = np.arange(total)
    else:
        coords = rng.choice(total, size=n_coords, replace=False)
    offsets = np.cumsum([0] + flat_sizes)
    worst = 0.0
    for c in sorted(int(c) for c in coords):
        p_i = int(np.searchsorted(offsets, c, side="right") - 1)
        local = c - offsets[p_i]
        idx = np.unravel_index(local, params[p_i].shape)
        orig = params[p_i][idx]
        params[p_i][idx] = orig + step
        up = loss_at()
        params[p_i][idx] = orig - step
        down = loss_at()
        params[p_i][idx] = orig
        numeric = (up - down) / (2.0 * step)
        a = analytic[p_i][idx]
        denom = max(1e-8, abs(a) + abs(numeric))
        worst = max(worst, abs(a - numeric) / denom)
    return worst


def numerical_gradient_check(family: str, n: int = 32, n_features: int = 6,
                             seed: int = 0, step: float = 1e-5,
                             n_coords: int = 250,
                             loss: LossSpec | None = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    Checks a random batch with seed-fixed data and parameters; families:
    logistic, mlp, tcn.
    """
    rng = rng_stream(seed, 909)
    loss = loss or LossSpec("cross_entropy")

    if family == "logistic":
        X = rng.normal(size=(n, n_features))
        y = (rng.random(n) < 0.5).astype(float)
        theta = rng.normal(size=n_features + 1)
        l2 = 0.7
        _, analytic = logistic_loss_grad(theta, X, y, l2)
        params = [theta]
        analytic_list = [analytic]

        def loss_at():
            return logistic_loss_grad(theta, X, y, l2)[0]

        return _max_rel_error(params, analytic_list, loss_at, rng, step, n_coords)

    if family == "mlp":
        X = rng.normal(size=(n, n_features))
        y = rng.integers(0, 3, size=n)
        params = mlp_mod.init_mlp(n_features, (16, 16), 3, seed)
        _, analytic = mlp_mod.loss_and_grads(params, X, y, loss, "multiclass")

        def loss_at():
            return mlp_mod.loss_and_grads(params, X, y, loss, "multiclass")[0]

        return _max_rel_error(params, analytic, loss_at, rng, step, n_coords)

    if family == "tcn":
        T = 12
        X = rng.normal(size=(n, T, n_features))
        y = rng.integers(0, 2, size=n)
        cfg = tcn_mod.TCNConfig(n_in=n_features, n_out=2, num_filters=8,
                                kernel_size=3, levels=2, dropout=0.0)
        params = tcn_mod.init_tcn(cfg, seed)
        _, analytic = tcn_mod.loss_and_grads(params, cfg, X, y, loss, "multiclass")

        def loss_at():
            return tcn_mod.loss_and_grads(params, cfg, X, y, loss, "multiclass")[0]

        return _max_rel_error(params, analytic, loss_at, rng, step, n_coords)

    raise ValueError(f"no gradient check for family {family!r}")
