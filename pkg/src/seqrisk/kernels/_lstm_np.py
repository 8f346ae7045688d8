"""Pure-numpy LSTM kernels (reference implementation and fallback backend).

Gate layout inside the fused weight matrices is [input | forget | cell | output],
each block of width H. Shapes:
    X  (B, T, E)   inputs
    Wx (E, 4H)     input weights
    Wh (H, 4H)     recurrent weights
    b  (4H,)       bias
Initial hidden and cell states are zero. The input projection and the weight
gradients are batched over all time steps; only the state recursion runs
per step.
"""
from __future__ import annotations

import numpy as np


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def lstm_forward(X, Wx, Wh, b):
    """Run the cell left to right; returns (H_seq, cache).

    cache holds the per-step cell states and activated gates needed by
    lstm_backward: (C (B,T,H), G (B,T,4H) with blocks i,f,g,o).
    """
    B, T, E = X.shape
    H = Wh.shape[0]
    if Wx.shape != (E, 4 * H) or b.shape != (4 * H,):
        raise ValueError("parameter shapes inconsistent with input")
    Zx = (X.reshape(B * T, E) @ Wx).reshape(B, T, 4 * H) + b
    H_seq = np.zeros((B, T, H))
    C = np.zeros((B, T, H))
    G = np.zeros((B, T, 4 * H))
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    for t in range(T):
        z = Zx[:, t] + h @ Wh
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = _sigmoid(z[:, 3 * H:])
        c = f * c + i * g
        h = o * np.tanh(c)
        H_seq[:, t] = h
        C[:, t] = c
        G[:, t, :H] = i
        G[:, t, H:2 * H] = f
        G[:, t, 2 * H:3 * H] = g
        G[:, t, 3 * H:] = o
    return H_seq, (C, G)


def lstm_backward(dH, X, Wx, Wh, H_seq, cache):
    """Backprop through time for lstm_forward.

    dH is the gradient w.r.t. every hidden state (B, T, H). Returns
    (dX, dWx, dWh, db).
    """
    C, G = cache
    B, T, E = X.shape
    H = Wh.shape[0]
    dZ = np.zeros((B, T, 4 * H))
    dh_carry = np.zeros((B, H))
    dc_carry = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        dh = dH[:, t] + dh_carry
        i = G[:, t, :H]
        f = G[:, t, H:2 * H]
        g = G[:, t, 2 * H:3 * H]
        o = G[:, t, 3 * H:]
        tc = np.tanh(C[:, t])
        dc = dc_carry + dh * o * (1.0 - tc * tc)
        c_prev = C[:, t - 1] if t > 0 else 0.0
        dz = dZ[:, t]
        dz[:, :H] = dc * g * i * (1.0 - i)
        dz[:, H:2 * H] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * H:3 * H] = dc * i * (1.0 - g * g)
        dz[:, 3 * H:] = dh * tc * o * (1.0 - o)
        dc_carry = dc * f
        dh_carry = dz @ Wh.T
    dZ_flat = dZ.reshape(B * T, 4 * H)
    dWx = X.reshape(B * T, E).T @ dZ_flat
    db = dZ_flat.sum(axis=0)
    dX = (dZ_flat @ Wx.T).reshape(B, T, E)
    # recurrent weights see h_{t-1}; the t=0 step has a zero previous state
    dWh = H_seq[:, :-1].reshape(-1, H).T @ dZ[:, 1:].reshape(-1, 4 * H)
    return dX, dWx, dWh, db
