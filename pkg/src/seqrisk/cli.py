"""Command-line surface: generate | analyze | train | evaluate | sweep | explain.

Every command is deterministic given its flags and seed; SEQRISK_SEED
overrides --seed when set. Exit code 0 iff no error.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import analysis, corpus, model as mdl, trainer
from .corpus import DEFAULT_CATALOG, RiskLevel
from .embedding import HashEmbedder, make_embedder

ABLATION_LABELS = {None: "full", "rf": "w/o RF", "pf": "w/o PF", "df": "w/o DF"}


def _seed_override(value):
    env = os.environ.get("SEQRISK_SEED")
    return int(env) if env is not None else value


def _load_config(path, seed, ablate) -> trainer.TrainConfig:
    if path:
        with open(path, encoding="utf-8") as fh:
            cfg = trainer.TrainConfig.from_dict(json.load(fh))
    else:
        cfg = trainer.TrainConfig()
    if seed is not None:
        cfg.seed = seed
    if ablate:
        setattr(cfg, f"disable_{ablate}", True)
    cfg.validate()
    return cfg


def _make_embedder(spec, cfg):
    return make_embedder(spec, dim=cfg.embed_dim)


def cmd_generate(args) -> int:
    config = corpus.SyntheticConfig(
        n_users=args.users,
        seed=_seed_override(args.seed),
        protective_pull=args.protective_pull,
        risk_push=args.risk_push,
    )
    timelines, truth = corpus.generate_synthetic(config)
    corpus.write_corpus(timelines, args.out)
    corpus.write_truth(truth, args.out + ".truth.jsonl")
    n_posts = sum(len(tl.posts) for tl in timelines)
    print(f"wrote {len(timelines)} users, {n_posts} posts to {args.out}")
    return 0


def cmd_analyze(args) -> int:
    timelines = corpus.load_corpus(args.corpus)
    if not timelines:
        raise ValueError("empty corpus")
    windows = corpus.build_all_windows(timelines, args.window_len)
    if not windows:
        raise ValueError(f"no windows at window length {args.window_len}")
    posts = [p for tl in timelines for p in tl.posts]

    rows = analysis.factor_discrimination(windows)
    cooc = analysis.cooccurrence(posts)
    kappa = None
    if args.ratings:
        with open(args.ratings, encoding="utf-8") as fh:
            kappa = analysis.fleiss_kappa(json.load(fh)["counts"])

    os.makedirs(args.out, exist_ok=True)
    report = {
        "methods": {
            "group_membership": "window target level (high = BR/AT, low = IN/ID)",
            "factor_presence": "any observed post in the window",
            "cooccurrence_counting_unit": "users",
            "chi_square": "Pearson, no continuity correction, "
                          f"significant iff > {analysis.CHI2_CRITICAL_1DF_05}",
        },
        "fleiss_kappa": kappa,
        "factor_discrimination": [
            {"code": r.code, "kind": r.kind, "chi_square": r.chi_square,
             "significant": r.significant}
            for r in rows
        ],
        "cooccurrence": {
            "risk_codes": list(cooc.risk_codes),
            "protective_codes": list(cooc.protective_codes),
            "values": [[None if np.isnan(v) else v for v in row]
                       for row in cooc.values],
            "row_user_counts": cooc.row_user_counts.tolist(),
        },
        "config": {"corpus": args.corpus, "window_len": args.window_len},
    }
    report_path = os.path.join(args.out, "report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
    csv_path = os.path.join(args.out, "cooccurrence.csv")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["risk_factor", *cooc.protective_codes])
        for i, code in enumerate(cooc.risk_codes):
            writer.writerow([code] + ["" if np.isnan(v) else f"{v:.6f}"
                                      for v in cooc.values[i]])
    print(f"wrote {report_path} and {csv_path}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args.config, _seed_override(args.seed), args.ablate)
    timelines = corpus.load_corpus(args.corpus)
    embedder = _make_embedder(args.embedder, cfg)
    os.makedirs(args.out, exist_ok=True)

    cv = trainer.cross_validate(timelines, cfg, k=args.folds,
                                embedder=embedder, keep_records=True)
    variant = ABLATION_LABELS[args.ablate]
    folds_doc = {
        "variant": variant,
        "config": cfg.as_dict(),
        "folds": [
            {"fold": f.fold, "n_windows": f.n_windows,
             "scores": f.scores.as_dict(), "baseline": f.baseline.as_dict()}
            for f in cv.folds
        ],
        "mean": cv.mean.as_dict(),
        "baseline_mean": cv.baseline_mean.as_dict(),
    }
    with open(os.path.join(args.out, "folds.json"), "w", encoding="utf-8") as fh:
        json.dump(folds_doc, fh, indent=2)
    with open(os.path.join(args.out, "folds.csv"), "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "fold", "gp", "gr", "fs"])
        for fold, gp, gr, fs in cv.fold_table():
            writer.writerow([variant, fold, f"{gp:.6f}", f"{gr:.6f}", f"{fs:.6f}"])
    with open(os.path.join(args.out, "records.jsonl"), "w", encoding="utf-8") as fh:
        for f in cv.folds:
            for rec in f.records:
                fh.write(json.dumps(rec) + "\n")

    # final model over all users, for explain
    result = trainer.train(timelines, cfg, embedder=embedder)
    meta = {"config": cfg.as_dict(), "embedder": embedder.spec_string(),
            "embed_seed": getattr(embedder, "seed", None),
            "best_epoch": result.best_epoch}
    mdl.save_model(os.path.join(args.out, "model.bin"), result.params, meta)
    with open(os.path.join(args.out, "history.csv"), "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh)
        cols = ["epoch", "train_sr", "train_pf", "train_rf", "train_df",
                "train_total", "val_total"]
        writer.writerow(cols)
        for row in result.history:
            writer.writerow([row[c] for c in cols])
    with open(os.path.join(args.out, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(cfg.as_dict(), fh, indent=2)
    print(f"run written to {args.out}: mean FS {cv.mean.fs:.4f} "
          f"(baseline {cv.baseline_mean.fs:.4f})")
    return 0


def cmd_evaluate(args) -> int:
    path = os.path.join(args.run, "folds.json")
    with open(path, encoding="utf-8") as fh:
        sys.stdout.write(fh.read())
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config, _seed_override(args.seed), None)
    timelines = corpus.load_corpus(args.corpus)
    embedder = _make_embedder(args.embedder, cfg)
    if args.values:
        cast = int if args.sweep == "l" else float
        values = [cast(v) for v in args.values.split(",")]
    else:
        values = [2, 3, 4, 5, 6] if args.sweep == "l" else [0.2, 0.4, 0.8, 1.5, 3.0]
    rows = trainer.sweep(timelines, cfg, args.sweep, values,
                         k=args.folds, embedder=embedder)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, f"sweep_{args.sweep}.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([args.sweep, "gp", "gr", "fs"])
        for row in rows:
            writer.writerow([row["value"], f"{row['gp']:.6f}",
                             f"{row['gr']:.6f}", f"{row['fs']:.6f}"])
    print(f"wrote {path}")
    return 0


def _iso(ts) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def cmd_explain(args) -> int:
    params, meta = mdl.load_model(args.model)
    cfg = trainer.TrainConfig.from_dict(meta["config"])
    if args.embedder:
        embedder = _make_embedder(args.embedder, cfg)
    elif meta["embedder"] == "hash":
        embedder = HashEmbedder(dim=cfg.embed_dim, seed=meta["embed_seed"])
    else:
        embedder = make_embedder(meta["embedder"], dim=cfg.embed_dim)

    timelines = corpus.load_corpus(args.corpus)
    by_user = {tl.user_id: tl for tl in timelines}
    if args.user not in by_user:
        raise ValueError(f"unknown user {args.user!r}")
    windows = corpus.build_windows(by_user[args.user], cfg.window_len)
    if not 0 <= args.window_index < len(windows):
        raise ValueError(
            f"window index {args.window_index} out of range; user {args.user!r} "
            f"has {len(windows)} windows at window length {cfg.window_len}")
    w = windows[args.window_index]

    X = np.stack([embedder.embed_post(p) for p in w.observed])[None, :, :]
    delta = w.delta_days[None, :]
    out = mdl.predict(params, X, delta, cfg)
    catalog = DEFAULT_CATALOG
    threshold = 0.5
    posts_rows = []
    for t, p in enumerate(w.observed):
        rf = [catalog.risk_codes[j] for j in range(catalog.n_risk)
              if out["rf_probs"][0, t, j] > threshold]
        pf = [catalog.protective_codes[j] for j in range(catalog.n_protective)
              if out["pf_probs"][0, t, j] > threshold]
        posts_rows.append({
            "post_id": p.post_id,
            "timestamp": _iso(p.timestamp),
            "attention": float(out["attn"][0, t]),
            "predicted_risk_factors": rf,
            "predicted_protective_factors": pf,
        })
    report = {
        "user_id": w.user_id,
        "window_index": args.window_index,
        "posts": posts_rows,
        "protective_influence": float(out["s_p"][0]),
        "risk_influence": float(out["s_r"][0]),
        "risk_distribution": {lv.name: float(out["risk_probs"][0, int(lv)])
                              for lv in RiskLevel},
        "predicted_level": RiskLevel(int(out["pred_level"][0])).name,
        "true_target_level": w.target_level.name,
        "target_post_id": w.target_post_id,
        "config": cfg.as_dict(),
    }
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)

    id_w = max(len(r["post_id"]) for r in posts_rows)
    print(f"{'post':<{id_w}}  {'timestamp':<20}  {'attn':>6}  factors>{threshold}")
    for r in posts_rows:
        facs = ",".join(r["predicted_risk_factors"]) or "-"
        pfacs = ",".join(r["predicted_protective_factors"]) or "-"
        print(f"{r['post_id']:<{id_w}}  {r['timestamp']:<20}  "
              f"{r['attention']:>6.3f}  {facs} | {pfacs}")
    print(f"protective influence  {report['protective_influence']:.4f}")
    print(f"risk influence        {report['risk_influence']:.4f}")
    dist = "  ".join(f"{k}:{v:.3f}" for k, v in report["risk_distribution"].items())
    print(f"risk distribution     {dist}")
    print(f"predicted level       {report['predicted_level']}")
    print(f"true target level     {report['true_target_level']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seqrisk",
        description="Subsequent-risk forecasting over user post timelines")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--users", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--protective-pull", type=float, default=0.3)
    p.add_argument("--risk-push", type=float, default=0.3)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("analyze", help="annotation analytics reports")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--window-len", type=int, default=4)
    p.add_argument("--ratings", help="JSON {'counts': [[...]]} rating matrix")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("train", help="cross-validate and fit a final model")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="TrainConfig JSON")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--ablate", choices=["rf", "pf", "df"])
    p.add_argument("--embedder", default="hash", help="hash or file:<path>")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="reprint stored fold scores of a run")
    p.add_argument("--run", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="sensitivity sweep over l or tau")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--sweep", choices=["l", "tau"], required=True)
    p.add_argument("--values", help="comma-separated values")
    p.add_argument("--embedder", default="hash")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("explain", help="per-window influence report")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--user", required=True)
    p.add_argument("--window-index", type=int, default=0)
    p.add_argument("--embedder")
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=cmd_explain)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        return 1
    except Exception as exc:  # uniform nonzero exit with a message
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
