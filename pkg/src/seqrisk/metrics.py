"""Graded evaluation for ordinal level predictions.

Exact matches are true positives; over-predictions (pred above truth) count
as false positives, under-predictions as false negatives, so every evaluated
prediction lands in exactly one bucket.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass


@dataclass
class GradedCounts:
    tp: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn


@dataclass
class GradedScores:
    gp: float  # graded precision
    gr: float  # graded recall
    fs: float  # graded F-score

    def as_dict(self) -> dict:
        return {"gp": self.gp, "gr": self.gr, "fs": self.fs}


def graded_counts(preds, truths) -> GradedCounts:
    preds = list(preds)
    truths = list(truths)
    if len(preds) != len(truths):
        raise ValueError(f"length mismatch: {len(preds)} preds vs {len(truths)} truths")
    if not preds:
        raise ValueError("nothing to evaluate")
    tp = fp = fn = 0
    for p, t in zip(preds, truths):
        if int(p) == int(t):
            tp += 1
        elif int(p) > int(t):
            fp += 1
        else:
            fn += 1
    return GradedCounts(tp=tp, fp=fp, fn=fn)


def graded_scores(counts: GradedCounts) -> GradedScores:
    """GP/GR/FS with the 0/0 -> 0 convention throughout."""
    if counts.total < 1:
        raise ValueError("all-zero counts")
    gp = counts.tp / (counts.tp + counts.fp) if counts.tp else 0.0
    gr = counts.tp / (counts.tp + counts.fn) if counts.tp else 0.0
    fs = 2 * gp * gr / (gp + gr) if gp + gr > 0 else 0.0
    return GradedScores(gp=gp, gr=gr, fs=fs)


def evaluate_levels(preds, truths) -> GradedScores:
    return graded_scores(graded_counts(preds, truths))


def majority_level_of(levels) -> int:
    """Most frequent level; ties resolve to the lower level index."""
    counts = Counter(int(x) for x in levels)
    best = min(counts, key=lambda lv: (-counts[lv], lv))
    return best


def majority_baseline_scores(train_levels, test_levels) -> GradedScores:
    """Scores of the constant predictor that always emits the train majority."""
    m = majority_level_of(train_levels)
    return evaluate_levels([m] * len(list(test_levels)), test_levels)
