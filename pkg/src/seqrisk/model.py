"""Full model composition: parameters, loss + analytic gradients, persistence.

The trainable state is the encoder, the decoder heads, and four per-task
log-sigma uncertainty weights (order: risk prediction, protective factors,
risk factors, dynamic integration). All gradients are hand-derived; the test
suite checks them against central finite differences.
"""
from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass

import numpy as np

from . import decoder as dec
from . import encoder as enc

TASK_ORDER = ("sr", "pf", "rf", "df")

_MAGIC = b"SQRK"
_VERSION = 1


@dataclass
class ModelParameters:
    encoder: enc.EncoderParams
    decoder: dec.DecoderParams
    log_sigma: np.ndarray  # (4,), tasks in TASK_ORDER


@dataclass
class WindowBatch:
    """Dense tensors for a batch of equal-length windows."""

    X: np.ndarray             # (B, T, E) post embeddings
    delta: np.ndarray         # (B, T) days back from the last observed post
    y_rf: np.ndarray          # (B, T, M) multi-hot risk factor labels
    y_pf: np.ndarray          # (B, T, K)
    last_level: np.ndarray    # (B,) level of the last observed post
    target_level: np.ndarray  # (B,) level of the subsequent post

    @property
    def size(self) -> int:
        return self.X.shape[0]


def init_model(rng, embed_dim, hidden_dim, n_risk, n_protective,
               factor_dim=None, factor_hidden=None, risk_hidden=None,
               attn_hidden=None) -> ModelParameters:
    factor_dim = factor_dim if factor_dim is not None else 2 * hidden_dim
    if factor_dim != 2 * hidden_dim:
        raise ValueError("factor_dim must equal 2*hidden_dim (cosine alignment "
                         "pairs factor embeddings with the pooled state)")
    return ModelParameters(
        encoder=enc.init_encoder_params(rng, embed_dim, hidden_dim, attn_hidden),
        decoder=dec.init_decoder_params(
            rng, embed_dim, factor_dim, n_risk, n_protective,
            factor_hidden=factor_hidden, risk_hidden=risk_hidden),
        log_sigma=np.zeros(4),
    )


def named_arrays(params: ModelParameters):
    """Fixed-order (name, array) traversal of every trainable tensor."""
    out = []
    for f in dataclasses.fields(enc.EncoderParams):
        out.append((f"encoder.{f.name}", getattr(params.encoder, f.name)))
    for f in dataclasses.fields(dec.DecoderParams):
        out.append((f"decoder.{f.name}", getattr(params.decoder, f.name)))
    out.append(("log_sigma", params.log_sigma))
    return out


def flatten(params: ModelParameters) -> np.ndarray:
    return np.concatenate([np.ravel(a) for _, a in named_arrays(params)])


def write_flat(params: ModelParameters, vec: np.ndarray) -> None:
    """Write a flat vector back into the parameter arrays in place."""
    i = 0
    for _, a in named_arrays(params):
        n = a.size
        a[...] = vec[i:i + n].reshape(a.shape)
        i += n
    if i != vec.size:
        raise ValueError("flat vector size mismatch")


def flatten_grads(grads: dict, params: ModelParameters) -> np.ndarray:
    parts = []
    for name, a in named_arrays(params):
        g = grads.get(name)
        parts.append(np.ravel(g) if g is not None else np.zeros(a.size))
    return np.concatenate(parts)


def clone_params(params: ModelParameters) -> ModelParameters:
    arrays = {name: a.copy() for name, a in named_arrays(params)}
    return params_from_arrays(arrays)


def compact(params: ModelParameters):
    """Rebuild the parameters as views into one flat buffer.

    Returns (params, buffer); updating the buffer in place updates every
    tensor, which lets the optimizer skip flatten/write round-trips.
    """
    flat = flatten(params)
    arrays = {}
    i = 0
    for name, a in named_arrays(params):
        arrays[name] = flat[i:i + a.size].reshape(a.shape)
        i += a.size
    return params_from_arrays(arrays), flat


def params_from_arrays(arrays: dict) -> ModelParameters:
    enc_kwargs = {}
    dec_kwargs = {}
    for name, a in arrays.items():
        scope, _, leaf = name.partition(".")
        if scope == "encoder":
            enc_kwargs[leaf] = a
        elif scope == "decoder":
            dec_kwargs[leaf] = a
        elif name != "log_sigma":
            raise ValueError(f"unknown parameter {name!r}")
    return ModelParameters(
        encoder=enc.EncoderParams(**enc_kwargs),
        decoder=dec.DecoderParams(**dec_kwargs),
        log_sigma=arrays["log_sigma"],
    )


def enabled_tasks(cfg) -> tuple:
    """Task names kept in the objective under the config's ablation flags."""
    disabled = set()
    if getattr(cfg, "disable_rf", False):
        disabled.add("rf")
    if getattr(cfg, "disable_pf", False):
        disabled.add("pf")
    if getattr(cfg, "disable_df", False):
        disabled.add("df")
    return tuple(t for t in TASK_ORDER if t not in disabled)


def weighted_total(bundle: dict, log_sigma, enabled=TASK_ORDER) -> float:
    """Uncertainty-weighted sum: L_k / (2 sigma_k^2) + log sigma_k per task.

    Ablated tasks contribute neither their loss term nor their log term.
    """
    total = 0.0
    for k, task in enumerate(TASK_ORDER):
        if task not in enabled:
            continue
        s = float(log_sigma[k])
        total += bundle[task] * 0.5 * np.exp(-2.0 * s) + s
    return float(total)


def _dropout_mask(rng, shape, rate):
    if rng is None or rate <= 0:
        return None
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def _forward(params: ModelParameters, batch: WindowBatch, cfg, rng=None):
    B, T, E = batch.X.shape
    H, enc_cache = enc.bilstm_encode(batch.X, params.encoder)
    attn, pooled, gates, att_cache = enc.temporal_attention(
        H, batch.delta, params.encoder)

    P = batch.X.reshape(B * T, E)
    rate = getattr(cfg, "dropout", 0.0)
    drop_rf = _dropout_mask(rng, (B * T, params.decoder.w_rf_in.shape[1]), rate)
    drop_pf = _dropout_mask(rng, (B * T, params.decoder.w_pf_in.shape[1]), rate)
    drop_risk = _dropout_mask(rng, (B, params.decoder.w_risk_in.shape[1]), rate)
    risk_embed, rf_logits, prot_embed, pf_logits, fh_cache = dec.factor_heads(
        P, params.decoder, drop_rf=drop_rf, drop_pf=drop_pf)
    risk_logits, rh_cache = dec.risk_head(pooled, params.decoder, drop_risk)

    return dict(
        H=H, enc_cache=enc_cache, attn=attn, pooled=pooled, gates=gates,
        att_cache=att_cache, P=P,
        risk_embed=risk_embed, rf_logits=rf_logits,
        prot_embed=prot_embed, pf_logits=pf_logits, fh_cache=fh_cache,
        risk_logits=risk_logits, rh_cache=rh_cache,
    )


def forward_loss(params: ModelParameters, batch: WindowBatch, cfg, rng=None):
    """Loss bundle {sr, pf, rf, df} plus the uncertainty-weighted total."""
    fw = _forward(params, batch, cfg, rng)
    B, T, _ = batch.X.shape
    l_rf, _ = dec.multilabel_bce(fw["rf_logits"], batch.y_rf.reshape(B * T, -1))
    l_pf, _ = dec.multilabel_bce(fw["pf_logits"], batch.y_pf.reshape(B * T, -1))
    prot_eff, risk_eff = dec.effectiveness(batch.last_level, batch.target_level)
    u_dim = fw["risk_embed"].shape[1]
    l_df, s_p, _, _, _ = dec.alignment_with_grads(
        fw["pooled"], fw["prot_embed"].reshape(B, T, u_dim),
        fw["risk_embed"].reshape(B, T, u_dim),
        cfg.temperature, prot_eff, risk_eff)
    l_sr, _ = dec.risk_loss_with_grads(
        fw["risk_logits"], batch.target_level, cfg.ordinal_penalty)
    bundle = {"sr": l_sr, "pf": l_pf, "rf": l_rf, "df": l_df}
    total = weighted_total(bundle, params.log_sigma, enabled_tasks(cfg))
    return total, bundle, {"s_p": s_p, "attn": fw["attn"],
                           "risk_logits": fw["risk_logits"]}


def loss_and_grads(params: ModelParameters, batch: WindowBatch, cfg, rng=None):
    """Weighted total, unweighted loss bundle, and gradients for every tensor."""
    fw = _forward(params, batch, cfg, rng)
    B, T, E = batch.X.shape
    u_dim = fw["risk_embed"].shape[1]
    enabled = enabled_tasks(cfg)
    sigma2 = np.exp(2.0 * params.log_sigma)
    scale = {t: (0.5 / sigma2[k] if t in enabled else 0.0)
             for k, t in enumerate(TASK_ORDER)}

    l_rf, d_rf_logits = dec.multilabel_bce(
        fw["rf_logits"], batch.y_rf.reshape(B * T, -1))
    l_pf, d_pf_logits = dec.multilabel_bce(
        fw["pf_logits"], batch.y_pf.reshape(B * T, -1))
    prot_eff, risk_eff = dec.effectiveness(batch.last_level, batch.target_level)
    l_df, s_p, d_pooled_df, d_prot_seq, d_risk_seq = dec.alignment_with_grads(
        fw["pooled"], fw["prot_embed"].reshape(B, T, u_dim),
        fw["risk_embed"].reshape(B, T, u_dim),
        cfg.temperature, prot_eff, risk_eff)
    l_sr, d_risk_logits = dec.risk_loss_with_grads(
        fw["risk_logits"], batch.target_level, cfg.ordinal_penalty)
    bundle = {"sr": l_sr, "pf": l_pf, "rf": l_rf, "df": l_df}
    total = weighted_total(bundle, params.log_sigma, enabled)

    grads = {}
    # risk head path
    d_pooled, rh_grads = dec.risk_head_backward(
        scale["sr"] * d_risk_logits, params.decoder, fw["rh_cache"])
    d_pooled = d_pooled + scale["df"] * d_pooled_df
    for k, v in rh_grads.items():
        grads[f"decoder.{k}"] = v
    # factor stacks (multi-label loss + alignment pull on the embeddings)
    dP, fh_grads = dec.factor_heads_backward(
        scale["rf"] * d_rf_logits,
        scale["pf"] * d_pf_logits,
        scale["df"] * d_risk_seq.reshape(B * T, u_dim),
        scale["df"] * d_prot_seq.reshape(B * T, u_dim),
        params.decoder, fw["fh_cache"])
    for k, v in fh_grads.items():
        grads[f"decoder.{k}"] = v
    # attention, then the recurrent encoder
    dH, att_grads = enc.attention_backward(
        d_pooled, None, params.encoder, fw["att_cache"])
    for k, v in att_grads.items():
        grads[f"encoder.{k}"] = v
    _, lstm_grads = enc.bilstm_backward(dH, params.encoder, fw["enc_cache"])
    for k, v in lstm_grads.items():
        grads[f"encoder.{k}"] = v
    # uncertainty weights: d/ds [L/(2 e^{2s}) + s] = 1 - L / sigma^2
    d_ls = np.zeros(4)
    for k, task in enumerate(TASK_ORDER):
        if task in enabled:
            d_ls[k] = 1.0 - bundle[task] / sigma2[k]
    grads["log_sigma"] = d_ls

    aux = {"s_p": s_p, "attn": fw["attn"], "risk_logits": fw["risk_logits"]}
    return total, bundle, grads, aux


def predict(params: ModelParameters, X, delta, cfg):
    """Inference over a batch: risk distribution, attention, influence scores.

    Argmax ties on the risk distribution resolve to the lower level.
    """
    batch_dims = X.shape[0], X.shape[1]
    encoding = enc.encode_sequences(X, delta, params.encoder)
    P = X.reshape(batch_dims[0] * batch_dims[1], X.shape[2])
    risk_embed, rf_logits, prot_embed, pf_logits, _ = dec.factor_heads(
        P, params.decoder)
    u_dim = risk_embed.shape[1]
    s_p, s_r = dec.alignment(
        encoding.pooled,
        prot_embed.reshape(batch_dims[0], batch_dims[1], u_dim),
        risk_embed.reshape(batch_dims[0], batch_dims[1], u_dim),
        cfg.temperature)
    risk_logits, _ = dec.risk_head(encoding.pooled, params.decoder)
    risk_probs = enc.softmax(risk_logits, axis=1)
    pred_level = np.argmax(risk_probs, axis=1)
    return {
        "risk_probs": risk_probs,
        "pred_level": pred_level,
        "attn": encoding.attn,
        "gates": encoding.gates,
        "s_p": s_p,
        "s_r": s_r,
        "rf_probs": enc.sigmoid(rf_logits).reshape(
            batch_dims[0], batch_dims[1], -1),
        "pf_probs": enc.sigmoid(pf_logits).reshape(
            batch_dims[0], batch_dims[1], -1),
    }


def save_model(path, params: ModelParameters, meta: dict) -> None:
    """Versioned binary: magic, JSON header with the dimension table, then
    the flat little-endian float64 parameter vector."""
    names_shapes = [[name, list(a.shape)] for name, a in named_arrays(params)]
    header = json.dumps(
        {"version": _VERSION, "arrays": names_shapes, "meta": meta}
    ).encode("utf-8")
    flat = flatten(params).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(flat.tobytes())


def load_model(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"not a model file: bad magic {magic!r}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header["version"] != _VERSION:
            raise ValueError(f"unsupported model version {header['version']}")
        raw = fh.read()
    flat = np.frombuffer(raw, dtype="<f8")
    arrays = {}
    i = 0
    for name, shape in header["arrays"]:
        n = int(np.prod(shape)) if shape else 1
        arrays[name] = flat[i:i + n].reshape(shape).copy()
        i += n
    if i != flat.size:
        raise ValueError("model file payload size mismatch")
    return params_from_arrays(arrays), header["meta"]
