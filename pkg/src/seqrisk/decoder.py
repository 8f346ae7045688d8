"""Multi-task decoding heads and losses.

Per post: two independent two-layer ReLU stacks produce a risk-factor
embedding and a protective-factor embedding plus multi-label logits. Per
window: the pooled sequence vector feeds an ordinal risk head, and
temperature-scaled cosine alignment between the pooled vector and the factor
embeddings yields complementary influence scores used by the dynamic
integration loss.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import sigmoid, softmax

_TINY_NORM = 1e-12


def softplus(x):
    x = np.asarray(x, dtype=float)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def logsumexp(x, axis=-1):
    m = np.max(x, axis=axis, keepdims=True)
    return np.squeeze(m, axis=axis) + np.log(np.exp(x - m).sum(axis=axis))


@dataclass
class DecoderParams:
    # risk-factor stack: post embedding -> hidden -> factor embedding -> logits
    w_rf_in: np.ndarray    # (E, F)
    b_rf_in: np.ndarray
    w_rf_embed: np.ndarray  # (F, U)
    b_rf_embed: np.ndarray
    w_rf_out: np.ndarray    # (U, M)
    b_rf_out: np.ndarray
    # protective-factor stack, same shapes with K outputs
    w_pf_in: np.ndarray
    b_pf_in: np.ndarray
    w_pf_embed: np.ndarray
    b_pf_embed: np.ndarray
    w_pf_out: np.ndarray    # (U, K)
    b_pf_out: np.ndarray
    # ordinal risk head on the pooled sequence vector
    w_risk_in: np.ndarray   # (U, R)
    b_risk_in: np.ndarray
    w_risk_out: np.ndarray  # (R, 4)
    b_risk_out: np.ndarray

    @property
    def factor_dim(self) -> int:
        return self.w_rf_embed.shape[1]


def init_decoder_params(rng, embed_dim, factor_dim, n_risk, n_protective,
                        factor_hidden=None, risk_hidden=None,
                        n_levels=4) -> DecoderParams:
    fh = factor_hidden if factor_hidden is not None else factor_dim // 2
    rh = risk_hidden if risk_hidden is not None else factor_dim // 2

    def u(n_in, n_out):
        s = 1.0 / np.sqrt(n_in)
        return rng.uniform(-s, s, size=(n_in, n_out))

    return DecoderParams(
        w_rf_in=u(embed_dim, fh), b_rf_in=np.zeros(fh),
        w_rf_embed=u(fh, factor_dim), b_rf_embed=np.zeros(factor_dim),
        w_rf_out=u(factor_dim, n_risk), b_rf_out=np.zeros(n_risk),
        w_pf_in=u(embed_dim, fh), b_pf_in=np.zeros(fh),
        w_pf_embed=u(fh, factor_dim), b_pf_embed=np.zeros(factor_dim),
        w_pf_out=u(factor_dim, n_protective), b_pf_out=np.zeros(n_protective),
        w_risk_in=u(factor_dim, rh), b_risk_in=np.zeros(rh),
        w_risk_out=u(rh, n_levels), b_risk_out=np.zeros(n_levels),
    )


def _stack_forward(P, w_in, b_in, w_embed, b_embed, w_out, b_out, drop_mask):
    hidden = np.maximum(P @ w_in + b_in, 0.0)
    hidden_d = hidden if drop_mask is None else hidden * drop_mask
    embed = np.maximum(hidden_d @ w_embed + b_embed, 0.0)
    logits = embed @ w_out + b_out
    return embed, logits, (hidden, hidden_d)


def factor_heads(P, params: DecoderParams, drop_rf=None, drop_pf=None):
    """Both factor stacks on flattened post embeddings P (N, E).

    Returns (risk_embed, rf_logits, protective_embed, pf_logits, cache).
    drop_* are optional inverted-dropout masks on the hidden layers.
    """
    risk_embed, rf_logits, c_rf = _stack_forward(
        P, params.w_rf_in, params.b_rf_in, params.w_rf_embed,
        params.b_rf_embed, params.w_rf_out, params.b_rf_out, drop_rf)
    prot_embed, pf_logits, c_pf = _stack_forward(
        P, params.w_pf_in, params.b_pf_in, params.w_pf_embed,
        params.b_pf_embed, params.w_pf_out, params.b_pf_out, drop_pf)
    cache = (P, c_rf, c_pf, risk_embed, prot_embed, drop_rf, drop_pf)
    return risk_embed, rf_logits, prot_embed, pf_logits, cache


def factor_heads_backward(d_rf_logits, d_pf_logits, d_risk_embed, d_prot_embed,
                          params: DecoderParams, cache):
    """Returns (dP, grads dict) for both stacks."""
    P, (h_rf, h_rf_d), (h_pf, h_pf_d), risk_embed, prot_embed, drop_rf, drop_pf = cache
    grads = {}
    dP = np.zeros_like(P)
    for prefix, d_logits, d_extra, w_in, w_embed, w_out, embed, hidden, hidden_d, mask in (
        ("rf", d_rf_logits, d_risk_embed, params.w_rf_in, params.w_rf_embed,
         params.w_rf_out, risk_embed, h_rf, h_rf_d, drop_rf),
        ("pf", d_pf_logits, d_prot_embed, params.w_pf_in, params.w_pf_embed,
         params.w_pf_out, prot_embed, h_pf, h_pf_d, drop_pf),
    ):
        dw_out = embed.T @ d_logits
        db_out = d_logits.sum(axis=0)
        d_embed = d_logits @ w_out.T
        if d_extra is not None:
            d_embed = d_embed + d_extra
        d_embed_pre = d_embed * (embed > 0)
        dw_embed = hidden_d.T @ d_embed_pre
        db_embed = d_embed_pre.sum(axis=0)
        d_hidden = d_embed_pre @ w_embed.T
        if mask is not None:
            d_hidden = d_hidden * mask
        d_hidden_pre = d_hidden * (hidden > 0)
        grads[f"w_{prefix}_in"] = P.T @ d_hidden_pre
        grads[f"b_{prefix}_in"] = d_hidden_pre.sum(axis=0)
        grads[f"w_{prefix}_embed"] = dw_embed
        grads[f"b_{prefix}_embed"] = db_embed
        grads[f"w_{prefix}_out"] = dw_out
        grads[f"b_{prefix}_out"] = db_out
        dP += d_hidden_pre @ w_in.T
    return dP, grads


def multilabel_bce(logits, targets):
    """Mean over rows of the summed per-label binary cross-entropy.

    Computed in logit space (softplus form), so it is finite for any logit
    and exact for confident predictions. Returns (loss, dloss/dlogits).
    """
    if logits.shape != targets.shape:
        raise ValueError("logits and targets must have equal shapes")
    n = logits.shape[0]
    per_elem = np.maximum(logits, 0.0) - logits * targets + np.log1p(
        np.exp(-np.abs(logits)))
    loss = float(per_elem.sum() / n)
    grad = (sigmoid(logits) - targets) / n
    return loss, grad


def factor_losses(rf_logits, pf_logits, y_rf, y_pf):
    """(risk-factor loss, protective-factor loss), each post-averaged."""
    l_rf, _ = multilabel_bce(rf_logits, y_rf)
    l_pf, _ = multilabel_bce(pf_logits, y_pf)
    return l_rf, l_pf


def effectiveness(last_level, target_level):
    """Transition effectiveness flags from the observed level change.

    Returns (protective_effective, risk_effective): the transition counted as
    protective when the level dropped, risk when it rose; never both.
    """
    last = np.asarray(last_level, dtype=int)
    tgt = np.asarray(target_level, dtype=int)
    change = tgt - last
    return (change < 0).astype(float), (change > 0).astype(float)


def _cosine_rows(u, E):
    """Cosine of u (B,U) against E (B,T,U) rows; zero-norm rows give 0."""
    u_norm = np.linalg.norm(u, axis=1)
    e_norm = np.linalg.norm(E, axis=2)
    dot = np.einsum("bu,btu->bt", u, E)
    denom = u_norm[:, None] * e_norm
    ok = denom > _TINY_NORM
    sims = np.where(ok, dot / np.where(ok, denom, 1.0), 0.0)
    return sims, u_norm, e_norm, ok


def alignment(pooled, prot_embed_seq, risk_embed_seq, temperature):
    """Complementary influence scores of the two factor types.

    Scores are the temperature-scaled softmax masses of exp(cos/temperature)
    summed per factor type over the window, computed stably in log space;
    protective + risk == 1 exactly.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    sims_p, _, _, _ = _cosine_rows(pooled, prot_embed_seq)
    sims_r, _, _, _ = _cosine_rows(pooled, risk_embed_seq)
    lse_p = logsumexp(sims_p / temperature, axis=1)
    lse_r = logsumexp(sims_r / temperature, axis=1)
    s_p = sigmoid(lse_p - lse_r)
    return s_p, 1.0 - s_p


def dynamic_loss(prot_eff, risk_eff, s_p):
    """Average alignment cross-entropy over windows where a transition occurred.

    Windows with no level change contribute nothing; with none at all the
    loss is 0 by convention.
    """
    eff = (prot_eff > 0) | (risk_eff > 0)
    if not np.any(eff):
        return 0.0
    sp = np.clip(s_p[eff], 1e-7, 1.0 - 1e-7)
    ep = prot_eff[eff]
    er = risk_eff[eff]
    terms = 0.5 * (-(ep * np.log(sp)) - (1 - ep) * np.log(1 - sp)
                   - er * np.log(1 - sp) - (1 - er) * np.log(sp))
    return float(terms.mean())


def alignment_with_grads(pooled, prot_embed_seq, risk_embed_seq, temperature,
                         prot_eff, risk_eff):
    """Dynamic integration loss with gradients.

    Returns (loss, s_p, d_pooled, d_prot_embed_seq, d_risk_embed_seq). The
    per-window loss is, with sp() the softplus,
        0.5 * [(Ep + 1 - Er) sp(lse_r - lse_p) + (1 - Ep + Er) sp(lse_p - lse_r)]
    which equals the alignment cross-entropy because the scores are exactly
    complementary.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    B, T, U = prot_embed_seq.shape
    sims_p, u_norm, ep_norm, ok_p = _cosine_rows(pooled, prot_embed_seq)
    sims_r, _, er_norm, ok_r = _cosine_rows(pooled, risk_embed_seq)
    lse_p = logsumexp(sims_p / temperature, axis=1)
    lse_r = logsumexp(sims_r / temperature, axis=1)
    diff = lse_p - lse_r
    s_p = sigmoid(diff)

    eff = (prot_eff > 0) | (risk_eff > 0)
    n_eff = int(eff.sum())
    if n_eff == 0:
        zero_u = np.zeros_like(pooled)
        return 0.0, s_p, zero_u, np.zeros_like(prot_embed_seq), np.zeros_like(risk_embed_seq)

    ep = prot_eff
    er = risk_eff
    w_p = ep + 1.0 - er   # weight on -log s_p
    w_r = 1.0 - ep + er   # weight on -log (1 - s_p)
    per_window = 0.5 * (w_p * softplus(-diff) + w_r * softplus(diff))
    loss = float(per_window[eff].sum() / n_eff)

    d_diff = np.where(eff, 0.5 * (-w_p * sigmoid(-diff) + w_r * s_p) / n_eff, 0.0)
    att_p = softmax(sims_p / temperature, axis=1)
    att_r = softmax(sims_r / temperature, axis=1)
    d_sims_p = d_diff[:, None] * att_p / temperature
    d_sims_r = -d_diff[:, None] * att_r / temperature

    d_pooled = np.zeros_like(pooled)
    d_prot = np.zeros_like(prot_embed_seq)
    d_risk = np.zeros_like(risk_embed_seq)
    un = np.where(u_norm > _TINY_NORM, u_norm, 1.0)
    u_hat = pooled / un[:, None]
    for sims, d_sims, E, e_norm, ok, dE in (
        (sims_p, d_sims_p, prot_embed_seq, ep_norm, ok_p, d_prot),
        (sims_r, d_sims_r, risk_embed_seq, er_norm, ok_r, d_risk),
    ):
        en = np.where(ok, e_norm, 1.0)
        e_hat = E / en[:, :, None]
        g = np.where(ok, d_sims, 0.0)
        # d sim / d u = (e_hat - sim * u_hat) / |u| ; symmetric for e
        d_pooled += np.einsum(
            "bt,btu->bu", g / un[:, None],
            e_hat - sims[:, :, None] * u_hat[:, None, :])
        dE += (g / en)[:, :, None] * (u_hat[:, None, :] - sims[:, :, None] * e_hat)
    return loss, s_p, d_pooled, d_prot, d_risk


def risk_head(pooled, params: DecoderParams, drop_mask=None):
    """Ordinal-level logits from the pooled sequence vector."""
    hidden = np.maximum(pooled @ params.w_risk_in + params.b_risk_in, 0.0)
    hidden_d = hidden if drop_mask is None else hidden * drop_mask
    logits = hidden_d @ params.w_risk_out + params.b_risk_out
    return logits, (pooled, hidden, hidden_d, drop_mask)


def risk_head_backward(d_logits, params: DecoderParams, cache):
    pooled, hidden, hidden_d, drop_mask = cache
    dw_out = hidden_d.T @ d_logits
    db_out = d_logits.sum(axis=0)
    d_hidden = d_logits @ params.w_risk_out.T
    if drop_mask is not None:
        d_hidden = d_hidden * drop_mask
    d_hidden_pre = d_hidden * (hidden > 0)
    dw_in = pooled.T @ d_hidden_pre
    db_in = d_hidden_pre.sum(axis=0)
    d_pooled = d_hidden_pre @ params.w_risk_in.T
    grads = dict(w_risk_in=dw_in, b_risk_in=db_in,
                 w_risk_out=dw_out, b_risk_out=db_out)
    return d_pooled, grads


def sord_targets(true_level, penalty, n_levels: int = 4):
    """Soft ordinal target distribution: softmax of -penalty * |k - true|.

    The mass peaks at the true level and decays with ordinal distance;
    penalty 0 gives the uniform distribution and penalty -> inf the one-hot.
    """
    if penalty < 0:
        raise ValueError("penalty must be >= 0")
    levels = np.atleast_1d(np.asarray(true_level, dtype=int))
    dist = np.abs(np.arange(n_levels)[None, :] - levels[:, None])
    t = softmax(-penalty * dist, axis=1)
    return t[0] if np.isscalar(true_level) or np.ndim(true_level) == 0 else t


def risk_loss(logits, true_level, penalty):
    """Batch-mean cross-entropy of predicted softmax against soft ordinal targets."""
    logits = np.atleast_2d(logits)
    targets = np.atleast_2d(sord_targets(true_level, penalty, logits.shape[1]))
    logp = logits - logsumexp(logits, axis=1)[:, None]
    return float(-(targets * logp).sum(axis=1).mean())


def risk_loss_with_grads(logits, true_level, penalty):
    targets = np.atleast_2d(sord_targets(true_level, penalty, logits.shape[1]))
    logp = logits - logsumexp(logits, axis=1)[:, None]
    loss = float(-(targets * logp).sum(axis=1).mean())
    d_logits = (np.exp(logp) - targets) / logits.shape[0]
    return loss, d_logits
