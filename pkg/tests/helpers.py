"""Shared test utilities: tiny random model instances and finite differences."""
from __future__ import annotations

import numpy as np

from seqrisk import model as mdl


def tiny_instance(seed, batch=3, steps=3, embed_dim=4, hidden_dim=3,
                  ensure_effect=True):
    """Random small model + batch with all parameters drawn continuously.

    Continuous parameter draws keep ReLU/clamp kinks away from the exact
    points finite differences straddle.
    """
    rng = np.random.default_rng(seed)
    params = mdl.init_model(rng, embed_dim=embed_dim, hidden_dim=hidden_dim,
                            n_risk=19, n_protective=5)
    flat = rng.uniform(-0.5, 0.5, size=mdl.flatten(params).size)
    mdl.write_flat(params, flat)
    X = rng.normal(size=(batch, steps, embed_dim))
    delta = np.abs(rng.normal(scale=3, size=(batch, steps)))
    delta[:, -1] = 0
    y_rf = (rng.random((batch, steps, 19)) < 0.2).astype(float)
    y_pf = (rng.random((batch, steps, 5)) < 0.2).astype(float)
    last = rng.integers(0, 4, size=batch)
    tgt = rng.integers(0, 4, size=batch)
    if ensure_effect:
        last[0], tgt[0] = 2, 1
    batch_t = mdl.WindowBatch(X=X, delta=delta, y_rf=y_rf, y_pf=y_pf,
                              last_level=last, target_level=tgt)
    return params, batch_t


def central_diff(f, arr, step=1e-6):
    """Central finite differences of scalar f w.r.t. every entry of arr."""
    num = np.zeros_like(arr, dtype=float)
    it = np.nditer(arr, flags=["multi_index"])
    while not it.finished:
        i = it.multi_index
        old = arr[i]
        arr[i] = old + step
        lp = f()
        arr[i] = old - step
        lm = f()
        arr[i] = old
        num[i] = (lp - lm) / (2 * step)
        it.iternext()
    return num


def rel_err(a, b):
    # denominator floor keeps exactly-zero gradient groups (softmax shift
    # invariance makes the energy bias gradient 0) from dividing by ~0
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-8)


def model_gradcheck(seed, cfg, step=1e-5):
    """Worst per-group relative error between analytic and numeric gradients."""
    params, batch = tiny_instance(seed)
    _, _, grads, _ = mdl.loss_and_grads(params, batch, cfg)
    flat = mdl.flatten(params)
    gflat = mdl.flatten_grads(grads, params)
    num = np.zeros_like(flat)
    for i in range(flat.size):
        v = flat.copy()
        v[i] += step
        mdl.write_flat(params, v)
        tp, _, _ = mdl.forward_loss(params, batch, cfg)
        v[i] -= 2 * step
        mdl.write_flat(params, v)
        tm, _, _ = mdl.forward_loss(params, batch, cfg)
        num[i] = (tp - tm) / (2 * step)
    mdl.write_flat(params, flat)
    worst, worst_name = 0.0, ""
    i = 0
    for name, a in mdl.named_arrays(params):
        n = a.size
        r = rel_err(gflat[i:i + n], num[i:i + n])
        if r > worst:
            worst, worst_name = r, name
        i += n
    return worst, worst_name
