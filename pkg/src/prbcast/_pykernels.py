"""Pure-numpy implementations of the hot kernels.

Must stay numerically interchangeable with ``_ckernels.pyx``; the test
suite runs both against each other.
"""
from __future__ import annotations

import numpy as np

BACKEND = "python"


def _sigmoid(a):
    return 0.5 * (np.tanh(0.5 * a) + 1.0)


def lstm_cell_forward(x, h, c, W, b):
    """One LSTM step with gate order (input, forget, cell, output).

    Returns ``(h_new, c_new, xh, acts, tanh_c)``; the last three are the
    cache consumed by :func:`lstm_cell_backward`.
    """
    H = h.shape[1]
    xh = np.concatenate([x, h], axis=1)
    a = xh @ W + b
    acts = np.empty_like(a)
    acts[:, : 2 * H] = _sigmoid(a[:, : 2 * H])
    acts[:, 2 * H : 3 * H] = np.tanh(a[:, 2 * H : 3 * H])
    acts[:, 3 * H :] = _sigmoid(a[:, 3 * H :])
    i, f, g, o = acts[:, :H], acts[:, H : 2 * H], acts[:, 2 * H : 3 * H], acts[:, 3 * H :]
    c_new = f * c + i * g
    tanh_c = np.tanh(c_new)
    h_new = o * tanh_c
    return h_new, c_new, xh, acts, tanh_c


def lstm_cell_backward(dh, dc_out, c, W, xh, acts, tanh_c):
    """Gradients of one LSTM step.

    Returns ``(dx, dh_prev, dc_prev, dW, db)``.
    """
    H = c.shape[1]
    i, f, g, o = acts[:, :H], acts[:, H : 2 * H], acts[:, 2 * H : 3 * H], acts[:, 3 * H :]
    dc = dc_out + dh * o * (1.0 - tanh_c * tanh_c)
    da = np.empty_like(acts)
    da[:, :H] = dc * g * i * (1.0 - i)
    da[:, H : 2 * H] = dc * c * f * (1.0 - f)
    da[:, 2 * H : 3 * H] = dc * i * (1.0 - g * g)
    da[:, 3 * H :] = dh * tanh_c * o * (1.0 - o)
    dW = xh.T @ da
    db = da.sum(axis=0)
    dxh = da @ W.T
    n_in = xh.shape[1] - H
    return dxh[:, :n_in], dxh[:, n_in:], dc * f, dW, db


def ar1_filter(innovations, coeff):
    """e[t] = coeff * e[t-1] + innovations[t], with e[-1] = 0."""
    out = np.empty_like(innovations, dtype=np.float64)
    prev = 0.0
    for t in range(innovations.shape[0]):
        prev = coeff * prev + innovations[t]
        out[t] = prev
    return out
