"""Joint optimization with uncertainty weighting, CV orchestration, sweeps.

Training is single-threaded and deterministic given the config seed: fold
assignment, the validation-user split, parameter init, batch shuffling and
dropout all derive from it.
"""
from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass, field, replace

import numpy as np

from . import model as mdl
from .corpus import DEFAULT_CATALOG, build_all_windows, split_users
from .embedding import HashEmbedder
from .metrics import (GradedScores, evaluate_levels, graded_counts,
                      graded_scores, majority_baseline_scores)


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch, batch):
        super().__init__(f"non-finite loss or parameters at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass
class TrainConfig:
    window_len: int = 4
    temperature: float = 0.4
    ordinal_penalty: float = 1.0
    learning_rate: float = 1e-3
    dropout: float = 0.1
    hidden_dim: int = 32
    factor_dim: int | None = None  # defaults to 2*hidden_dim, and must equal it
    embed_dim: int = 64
    max_epochs: int = 200
    patience: int = 10
    seed: int = 0
    batch_size: int = 32
    disable_rf: bool = False
    disable_pf: bool = False
    disable_df: bool = False

    def validate(self) -> None:
        if self.window_len < 1:
            raise ValueError("window_len must be >= 1")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.ordinal_penalty < 0:
            raise ValueError("ordinal_penalty must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")
        if self.hidden_dim < 1 or self.embed_dim < 1:
            raise ValueError("dims must be positive")
        if self.factor_dim is not None and self.factor_dim != 2 * self.hidden_dim:
            raise ValueError("factor_dim must equal 2*hidden_dim")
        if self.max_epochs < 1 or self.patience < 1 or self.batch_size < 1:
            raise ValueError("max_epochs, patience, batch_size must be >= 1")

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)


def total_loss(bundle: dict, log_sigma, ablations=()) -> float:
    """Uncertainty-weighted objective over the enabled tasks.

    bundle maps task name (sr, pf, rf, df) to its unweighted loss; ablations
    is an iterable of task names to drop entirely.
    """
    enabled = tuple(t for t in mdl.TASK_ORDER if t not in set(ablations))
    return mdl.weighted_total(bundle, np.asarray(log_sigma, dtype=float), enabled)


class Adam:
    """First-order adaptive-moment update on the flat parameter vector."""

    def __init__(self, size, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, vec, grad):
        """Update vec in place and return it."""
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mhat = self.m / (1 - self.beta1 ** self.t)
        vhat = self.v / (1 - self.beta2 ** self.t)
        vec -= self.lr * mhat / (np.sqrt(vhat) + self.eps)
        return vec


@dataclass
class WindowDataset:
    """Dense tensors covering every window of a split, sliceable into batches."""

    X: np.ndarray
    delta: np.ndarray
    y_rf: np.ndarray
    y_pf: np.ndarray
    last_level: np.ndarray
    target_level: np.ndarray
    meta: list  # (user_id, target_post_id) per window

    @property
    def size(self) -> int:
        return self.X.shape[0]

    def batch(self, idx) -> mdl.WindowBatch:
        return mdl.WindowBatch(
            X=self.X[idx], delta=self.delta[idx],
            y_rf=self.y_rf[idx], y_pf=self.y_pf[idx],
            last_level=self.last_level[idx], target_level=self.target_level[idx])

    def n_effective(self, idx=None) -> int:
        last = self.last_level if idx is None else self.last_level[idx]
        tgt = self.target_level if idx is None else self.target_level[idx]
        return int(np.sum(last != tgt))


def embed_corpus(timelines, embedder) -> dict:
    """post_id -> embedding vector, computed once and shared across folds."""
    cache = {}
    for tl in timelines:
        for p in tl.posts:
            cache[p.post_id] = embedder.embed_post(p)
    return cache


def build_dataset(windows, embed_cache, catalog=DEFAULT_CATALOG) -> WindowDataset:
    if not windows:
        raise ValueError("no windows to assemble")
    T = len(windows[0].observed)
    dim = len(next(iter(embed_cache.values())))
    n = len(windows)
    X = np.zeros((n, T, dim))
    delta = np.zeros((n, T))
    y_rf = np.zeros((n, T, catalog.n_risk))
    y_pf = np.zeros((n, T, catalog.n_protective))
    last_level = np.zeros(n, dtype=int)
    target_level = np.zeros(n, dtype=int)
    meta = []
    for w_i, w in enumerate(windows):
        for t, p in enumerate(w.observed):
            X[w_i, t] = embed_cache[p.post_id]
            y_rf[w_i, t] = catalog.risk_vector(p.risk_factors)
            y_pf[w_i, t] = catalog.protective_vector(p.protective_factors)
        delta[w_i] = w.delta_days
        last_level[w_i] = int(w.observed[-1].risk_level)
        target_level[w_i] = int(w.target_level)
        meta.append((w.user_id, w.target_post_id))
    return WindowDataset(X, delta, y_rf, y_pf, last_level, target_level, meta)


def _eval_losses(params, dataset: WindowDataset, cfg) -> dict:
    """Unweighted loss bundle over a whole dataset, batched, no dropout."""
    sums = {t: 0.0 for t in mdl.TASK_ORDER}
    n = dataset.size
    n_eff_total = 0
    for start in range(0, n, cfg.batch_size):
        idx = slice(start, min(start + cfg.batch_size, n))
        batch = dataset.batch(idx)
        _, bundle, _ = mdl.forward_loss(params, batch, cfg, rng=None)
        b = batch.size
        n_eff = dataset.n_effective(idx)
        sums["sr"] += bundle["sr"] * b
        sums["rf"] += bundle["rf"] * b
        sums["pf"] += bundle["pf"] * b
        sums["df"] += bundle["df"] * n_eff
        n_eff_total += n_eff
    out = {t: sums[t] / n for t in ("sr", "rf", "pf")}
    out["df"] = sums["df"] / n_eff_total if n_eff_total else 0.0
    return out


@dataclass
class TrainResult:
    params: mdl.ModelParameters
    history: list
    best_epoch: int
    stopped_epoch: int
    val_users: list


def _split_validation_users(user_ids, seed):
    """Hold out ~10% of train users (at least one) for early stopping."""
    user_ids = sorted(user_ids)
    if len(user_ids) < 2:
        return user_ids, []
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFF, 3])
    n_val = max(1, round(0.1 * len(user_ids)))
    perm = rng.permutation(len(user_ids))
    val = {user_ids[i] for i in perm[:n_val]}
    train = [u for u in user_ids if u not in val]
    return train, sorted(val)


def train(timelines, cfg: TrainConfig, embedder=None,
          catalog=DEFAULT_CATALOG, embed_cache=None) -> TrainResult:
    """Gradient training with early stopping on held-out-user validation loss.

    Returns the parameters from the best-validation epoch.
    """
    cfg.validate()
    if embedder is None:
        embedder = HashEmbedder(dim=cfg.embed_dim)
    if embed_cache is None:
        embed_cache = embed_corpus(timelines, embedder)

    by_user = {tl.user_id: tl for tl in timelines}
    train_users, val_users = _split_validation_users(by_user.keys(), cfg.seed)
    train_windows = build_all_windows(
        [by_user[u] for u in train_users], cfg.window_len)
    if not train_windows:
        raise ValueError("corpus yields no training windows under this config")
    val_windows = build_all_windows(
        [by_user[u] for u in val_users], cfg.window_len)
    train_ds = build_dataset(train_windows, embed_cache, catalog)
    # fall back to train-loss stopping when no validation user has a window
    val_ds = build_dataset(val_windows, embed_cache, catalog) if val_windows else train_ds

    rng_init = np.random.default_rng([cfg.seed & 0xFFFFFFFF, 1])
    rng_epoch = np.random.default_rng([cfg.seed & 0xFFFFFFFF, 2])
    params = mdl.init_model(
        rng_init, embed_dim=cfg.embed_dim, hidden_dim=cfg.hidden_dim,
        n_risk=catalog.n_risk, n_protective=catalog.n_protective,
        factor_dim=cfg.factor_dim)
    params, flat = mdl.compact(params)
    opt = Adam(flat.size, lr=cfg.learning_rate)
    enabled = mdl.enabled_tasks(cfg)

    best_val = np.inf
    best_params = mdl.clone_params(params)
    best_epoch = 0
    bad_streak = 0
    history = []
    n = train_ds.size
    for epoch in range(1, cfg.max_epochs + 1):
        perm = rng_epoch.permutation(n)
        sums = {t: 0.0 for t in mdl.TASK_ORDER}
        n_eff_total = 0
        for b_i, start in enumerate(range(0, n, cfg.batch_size)):
            idx = perm[start:start + cfg.batch_size]
            batch = train_ds.batch(idx)
            total, bundle, grads, _ = mdl.loss_and_grads(
                params, batch, cfg, rng=rng_epoch)
            if not np.isfinite(total):
                raise TrainingDivergedError(epoch, b_i)
            gflat = mdl.flatten_grads(grads, params)
            opt.step(flat, gflat)  # in place; params view this buffer
            if not np.all(np.isfinite(flat)):
                raise TrainingDivergedError(epoch, b_i)
            n_eff = train_ds.n_effective(idx)
            sums["sr"] += bundle["sr"] * batch.size
            sums["rf"] += bundle["rf"] * batch.size
            sums["pf"] += bundle["pf"] * batch.size
            sums["df"] += bundle["df"] * n_eff
            n_eff_total += n_eff
        train_bundle = {t: sums[t] / n for t in ("sr", "rf", "pf")}
        train_bundle["df"] = sums["df"] / n_eff_total if n_eff_total else 0.0
        val_bundle = _eval_losses(params, val_ds, cfg)
        val_total = mdl.weighted_total(val_bundle, params.log_sigma, enabled)
        history.append({
            "epoch": epoch,
            **{f"train_{t}": train_bundle[t] for t in mdl.TASK_ORDER},
            "train_total": mdl.weighted_total(train_bundle, params.log_sigma, enabled),
            "val_total": val_total,
        })
        if val_total < best_val - 1e-12:
            best_val = val_total
            best_params = mdl.clone_params(params)
            best_epoch = epoch
            bad_streak = 0
        else:
            bad_streak += 1
            if bad_streak >= cfg.patience:
                break
    return TrainResult(params=best_params, history=history,
                       best_epoch=best_epoch, stopped_epoch=len(history),
                       val_users=val_users)


def predict_dataset(params, dataset: WindowDataset, cfg, batch_size=256):
    """Predictions over a dataset; returns dict of stacked arrays."""
    preds = []
    s_p = []
    probs = []
    for start in range(0, dataset.size, batch_size):
        idx = slice(start, min(start + batch_size, dataset.size))
        out = mdl.predict(params, dataset.X[idx], dataset.delta[idx], cfg)
        preds.append(out["pred_level"])
        s_p.append(out["s_p"])
        probs.append(out["risk_probs"])
    return {
        "pred_level": np.concatenate(preds),
        "s_p": np.concatenate(s_p),
        "risk_probs": np.concatenate(probs, axis=0),
    }


@dataclass
class FoldResult:
    fold: int
    scores: GradedScores
    baseline: GradedScores
    n_windows: int
    records: list = field(default_factory=list)


@dataclass
class CVResult:
    folds: list
    mean: GradedScores
    baseline_mean: GradedScores

    def fold_table(self) -> list:
        rows = [(f.fold, f.scores.gp, f.scores.gr, f.scores.fs) for f in self.folds]
        rows.append(("mean", self.mean.gp, self.mean.gr, self.mean.fs))
        return rows


def _mean_scores(scores) -> GradedScores:
    return GradedScores(
        gp=float(np.mean([s.gp for s in scores])),
        gr=float(np.mean([s.gr for s in scores])),
        fs=float(np.mean([s.fs for s in scores])))


def cross_validate(timelines, cfg: TrainConfig, k: int = 5, embedder=None,
                   catalog=DEFAULT_CATALOG, keep_records=False) -> CVResult:
    """User-disjoint k-fold evaluation; scores averaged across folds."""
    cfg.validate()
    if embedder is None:
        embedder = HashEmbedder(dim=cfg.embed_dim)
    embed_cache = embed_corpus(timelines, embedder)
    assignment = split_users(timelines, k, cfg.seed)
    by_user = {tl.user_id: tl for tl in timelines}
    folds = []
    for f_i in range(k):
        test_users = set(assignment.users_in_fold(f_i))
        train_tls = [tl for tl in timelines if tl.user_id not in test_users]
        test_tls = [by_user[u] for u in sorted(test_users)]
        assert not test_users & {tl.user_id for tl in train_tls}
        try:
            result = train(train_tls, cfg, embedder=embedder,
                           catalog=catalog, embed_cache=embed_cache)
        except Exception as exc:
            raise RuntimeError(f"fold {f_i} failed: {exc}") from exc
        test_windows = build_all_windows(test_tls, cfg.window_len)
        if not test_windows:
            folds.append(FoldResult(f_i, GradedScores(0, 0, 0),
                                    GradedScores(0, 0, 0), 0))
            continue
        test_ds = build_dataset(test_windows, embed_cache, catalog)
        out = predict_dataset(result.params, test_ds, cfg)
        scores = evaluate_levels(out["pred_level"], test_ds.target_level)
        train_targets = [int(w.target_level)
                         for w in build_all_windows(train_tls, cfg.window_len)]
        baseline = majority_baseline_scores(train_targets, test_ds.target_level)
        records = []
        if keep_records:
            for i, (user_id, target_post_id) in enumerate(test_ds.meta):
                records.append({
                    "fold": f_i,
                    "user_id": user_id,
                    "target_post_id": target_post_id,
                    "pred_level": int(out["pred_level"][i]),
                    "true_level": int(test_ds.target_level[i]),
                    "s_p": float(out["s_p"][i]),
                })
        folds.append(FoldResult(f_i, scores, baseline,
                                len(test_windows), records))
    scored = [f for f in folds if f.n_windows > 0]
    return CVResult(folds=folds,
                    mean=_mean_scores([f.scores for f in scored]),
                    baseline_mean=_mean_scores([f.baseline for f in scored]))


def grid_search(timelines, base_cfg: TrainConfig, grid: dict, k: int = 5,
                embedder=None, catalog=DEFAULT_CATALOG):
    """Exhaustive search over config-field value lists, ranked by mean FS.

    Candidates are visited in lexicographic order (keys alphabetical, values
    ascending) and ties keep the earlier, lexicographically smaller config.
    """
    if not grid:
        raise ValueError("empty grid")
    keys = sorted(grid)
    value_lists = [sorted(grid[key]) for key in keys]
    best_cfg = None
    best_fs = -1.0
    table = []
    for combo in itertools.product(*value_lists):
        cfg = replace(base_cfg, **dict(zip(keys, combo)))
        result = cross_validate(timelines, cfg, k=k, embedder=embedder,
                                catalog=catalog)
        table.append({"config": dict(zip(keys, combo)),
                      "mean": result.mean.as_dict()})
        if result.mean.fs > best_fs:
            best_fs = result.mean.fs
            best_cfg = cfg
    return best_cfg, table


SWEEP_PARAMS = {"l": "window_len", "tau": "temperature"}


def sweep(timelines, cfg: TrainConfig, parameter: str, values, k: int = 5,
          embedder=None, catalog=DEFAULT_CATALOG) -> list:
    """One cross-validation per value of window length or temperature."""
    if parameter not in SWEEP_PARAMS:
        raise ValueError(f"parameter must be one of {sorted(SWEEP_PARAMS)}")
    if not list(values):
        raise ValueError("no sweep values")
    field_name = SWEEP_PARAMS[parameter]
    rows = []
    for v in values:
        cfg_v = replace(cfg, **{field_name: v})
        result = cross_validate(timelines, cfg_v, k=k, embedder=embedder,
                                catalog=catalog)
        rows.append({"value": v, "gp": result.mean.gp,
                     "gr": result.mean.gr, "fs": result.mean.fs})
    return rows
