"""Temporal-aware sequence encoding.

A bidirectional LSTM turns per-post embeddings into per-post states; a
temporal attention with a learnable decay gate sigmoid(decay_offset -
decay_rate * delta_days) pools them into one sequence vector. The gate damps
older posts' attention energies while pooling always mixes the raw states.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(z, axis=-1):
    z = np.asarray(z, dtype=float)
    m = z.max(axis=axis, keepdims=True)
    e = np.exp(z - m)
    return e / e.sum(axis=axis, keepdims=True)


@dataclass
class EncoderParams:
    # forward / backward LSTM directions, gate layout [i|f|g|o]
    wx_fwd: np.ndarray  # (E, 4H)
    wh_fwd: np.ndarray  # (H, 4H)
    b_fwd: np.ndarray   # (4H,)
    wx_bwd: np.ndarray
    wh_bwd: np.ndarray
    b_bwd: np.ndarray
    # attention energy map: scalar energy v . tanh(W delta + b) + c
    w_att: np.ndarray   # (2H, A)
    b_att: np.ndarray   # (A,)
    v_att: np.ndarray   # (A,)
    c_att: np.ndarray   # () scalar
    decay_offset: np.ndarray  # () scalar, gate bias (moderate initial gates)
    decay_rate: np.ndarray    # () scalar, per-day decay

    @property
    def hidden_dim(self) -> int:
        return self.wh_fwd.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.wx_fwd.shape[0]


def init_encoder_params(rng, embed_dim: int, hidden_dim: int,
                        attn_hidden: int | None = None) -> EncoderParams:
    """Uniform +-1/sqrt(hidden) recurrent init; gentle initial decay."""
    a = attn_hidden if attn_hidden is not None else hidden_dim
    s = 1.0 / np.sqrt(hidden_dim)
    u = lambda *shape: rng.uniform(-s, s, size=shape)
    return EncoderParams(
        wx_fwd=u(embed_dim, 4 * hidden_dim),
        wh_fwd=u(hidden_dim, 4 * hidden_dim),
        b_fwd=np.zeros(4 * hidden_dim),
        wx_bwd=u(embed_dim, 4 * hidden_dim),
        wh_bwd=u(hidden_dim, 4 * hidden_dim),
        b_bwd=np.zeros(4 * hidden_dim),
        w_att=u(2 * hidden_dim, a),
        b_att=np.zeros(a),
        v_att=u(a),
        c_att=np.zeros(()),
        decay_offset=np.array(1.0),
        decay_rate=np.array(0.1),
    )


def bilstm_encode(X, params: EncoderParams):
    """Per-post states from both directions, concatenated to (B, T, 2H)."""
    if X.ndim != 3 or X.shape[2] != params.embed_dim:
        raise ValueError(
            f"expected inputs (B, T, {params.embed_dim}), got {X.shape}"
        )
    Hf, cache_f = kernels.lstm_forward(X, params.wx_fwd, params.wh_fwd, params.b_fwd)
    Xr = np.ascontiguousarray(X[:, ::-1])
    Hb_r, cache_b = kernels.lstm_forward(Xr, params.wx_bwd, params.wh_bwd, params.b_bwd)
    H = np.concatenate([Hf, Hb_r[:, ::-1]], axis=2)
    return H, (X, Xr, Hf, Hb_r, cache_f, cache_b)


def bilstm_backward(dH, params: EncoderParams, cache):
    X, Xr, Hf, Hb_r, cache_f, cache_b = cache
    hid = params.hidden_dim
    dHf = np.ascontiguousarray(dH[:, :, :hid])
    dHb_r = np.ascontiguousarray(dH[:, ::-1, hid:])
    dXf, dwx_f, dwh_f, db_f = kernels.lstm_backward(
        dHf, X, params.wx_fwd, params.wh_fwd, Hf, cache_f)
    dXb_r, dwx_b, dwh_b, db_b = kernels.lstm_backward(
        dHb_r, Xr, params.wx_bwd, params.wh_bwd, Hb_r, cache_b)
    dX = dXf + dXb_r[:, ::-1]
    grads = dict(wx_fwd=dwx_f, wh_fwd=dwh_f, b_fwd=db_f,
                 wx_bwd=dwx_b, wh_bwd=dwh_b, b_bwd=db_b)
    return dX, grads


def temporal_attention(H, delta_days, params: EncoderParams):
    """Decay-gated attention pooling.

    Returns (attn (B,T), pooled (B,2H), gates (B,T), cache). Energies come
    from the gated states; pooling mixes the ungated states with the softmax
    weights.
    """
    B, T, D = H.shape
    dt = np.asarray(delta_days, dtype=float)
    if dt.shape != (B, T):
        raise ValueError(f"delta_days shape {dt.shape} != {(B, T)}")
    gates = sigmoid(float(params.decay_offset) - float(params.decay_rate) * dt)
    gated = gates[:, :, None] * H
    pre = gated @ params.w_att + params.b_att           # (B, T, A)
    act = np.tanh(pre)
    energy = act @ params.v_att + float(params.c_att)   # (B, T)
    attn = softmax(energy, axis=1)
    pooled = np.einsum("bt,btd->bd", attn, H)
    cache = (H, dt, gates, gated, act, attn)
    return attn, pooled, gates, cache


def attention_backward(d_pooled, d_attn_extra, params: EncoderParams, cache):
    """Gradients of attention pooling.

    d_pooled is dLoss/d pooled; d_attn_extra (may be None) is any direct
    gradient on the attention weights. Returns (dH, grads dict).
    """
    H, dt, gates, gated, act, attn = cache
    B, T, D = H.shape
    d_attn = np.einsum("bd,btd->bt", d_pooled, H)
    if d_attn_extra is not None:
        d_attn = d_attn + d_attn_extra
    dH = attn[:, :, None] * d_pooled[:, None, :]
    # softmax backward
    d_energy = attn * (d_attn - (attn * d_attn).sum(axis=1, keepdims=True))
    d_act = d_energy[:, :, None] * params.v_att
    dv = np.einsum("bt,bta->a", d_energy, act)
    dc = d_energy.sum()
    d_pre = d_act * (1.0 - act * act)
    dw = np.einsum("btd,bta->da", gated, d_pre)
    db = d_pre.sum(axis=(0, 1))
    d_gated = d_pre @ params.w_att.T
    dH += gates[:, :, None] * d_gated
    d_gate = np.einsum("btd,btd->bt", d_gated, H)
    d_arg = d_gate * gates * (1.0 - gates)
    d_offset = d_arg.sum()
    d_rate = -(d_arg * dt).sum()
    grads = dict(w_att=dw, b_att=db, v_att=dv, c_att=np.array(dc),
                 decay_offset=np.array(d_offset), decay_rate=np.array(d_rate))
    return dH, grads


@dataclass
class SequenceEncoding:
    """Public view of one encoded batch: states, attention, pooled vectors."""

    states: np.ndarray   # (B, T, 2H)
    attn: np.ndarray     # (B, T), rows sum to 1
    pooled: np.ndarray   # (B, 2H)
    gates: np.ndarray    # (B, T), in (0, 1)


def encode_sequences(X, delta_days, params: EncoderParams) -> SequenceEncoding:
    H, _ = bilstm_encode(X, params)
    attn, pooled, gates, _ = temporal_attention(H, delta_days, params)
    return SequenceEncoding(states=H, attn=attn, pooled=pooled, gates=gates)
