"""Pure numpy implementations of the hot kernels.

Same contracts as the compiled versions in ``_fast.pyx``; selected at import
time by ``msprog._kernels`` when the extension is unavailable or when
MSPROG_KERNELS=slow.
"""

import numpy as np


def best_split(values, grad, hess, min_leaf):
    """Best split position for one feature of one tree node.

    Inputs are sorted ascending by ``values``; ``grad``/``hess`` are aligned.
    A split at position p sends rows [0, p) left and [p, n) right, and is only
    allowed where the value actually changes and both sides keep ``min_leaf``
    rows. Gain is the Newton objective improvement
    GL^2/HL + GR^2/HR - G^2/H. Returns (pos, gain), or (-1, 0.0) if no
    admissible split improves the objective.
    """
    n = values.shape[0]
    if n < 2 * min_leaf:
        return -1, 0.0
    gl = np.cumsum(grad)[:-1]
    hl = np.cumsum(hess)[:-1]
    g, h = gl[-1] + grad[-1], hl[-1] + hess[-1]
    gr = g - gl
    hr = h - hl
    eps = 1e-12
    gains = gl * gl / (hl + eps) + gr * gr / (hr + eps) - g * g / (h + eps)
    ok = values[1:] > values[:-1]
    pos_idx = np.arange(1, n)
    ok &= (pos_idx >= min_leaf) & (pos_idx <= n - min_leaf)
    gains = np.where(ok, gains, -np.inf)
    best = int(np.argmax(gains))
    if not np.isfinite(gains[best]) or gains[best] <= 0.0:
        return -1, 0.0
    return best + 1, float(gains[best])


def conv1d_fwd(x, w, b, dilation):
    """Causal dilated 1-D convolution.

    x: (n, T, c_in), w: (k, c_in, c_out), b: (c_out,). Output (n, T, c_out);
    y[:, t] depends only on x[:, t - j*dilation] for j in [0, k), with
    out-of-range taps treated as zero (left zero padding).
    """
    n, T, _ = x.shape
    k = w.shape[0]
    c_out = w.shape[2]
    y = np.empty((n, T, c_out), dtype=np.float64)
    y[:] = b
    for j in range(k):
        shift = j * dilation
        if shift >= T:
            break
        y[:, shift:, :] += x[:, : T - shift, :] @ w[j]
    return y


def conv1d_bwd(x, w, dy, dilation):
    """Gradients of conv1d_fwd: returns (dx, dw, db)."""
    n, T, c_in = x.shape
    k = w.shape[0]
    dx = np.zeros_like(x)
    dw = np.zeros_like(w)
    for j in range(k):
        shift = j * dilation
        if shift >= T:
            break
        dx[:, : T - shift, :] += dy[:, shift:, :] @ w[j].T
        dw[j] = np.tensordot(x[:, : T - shift, :], dy[:, shift:, :], axes=([0, 1], [0, 1]))
    db = dy.sum(axis=(0, 1))
    return dx, dw, db
