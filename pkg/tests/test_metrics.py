import itertools

import numpy as np
import pytest

from seqrisk.metrics import (GradedCounts, evaluate_levels, graded_counts,
                             graded_scores, majority_baseline_scores,
                             majority_level_of)


def brute_force_counts(preds, truths):
    tp = sum(1 for p, t in zip(preds, truths) if p == t)
    fp = sum(1 for p, t in zip(preds, truths) if p > t)
    fn = sum(1 for p, t in zip(preds, truths) if p < t)
    return tp, fp, fn


class TestGradedCounts:
    def test_exact_match(self):
        c = graded_counts([0, 1, 2, 3], [0, 1, 2, 3])
        assert (c.tp, c.fp, c.fn) == (4, 0, 0)

    def test_hand_enumerated(self):
        c = graded_counts([2, 1, 3], [2, 2, 1])
        assert (c.tp, c.fp, c.fn) == (1, 1, 1)

    def test_all_over_prediction(self):
        c = graded_counts([3] * 6, [0] * 6)
        assert (c.tp, c.fp, c.fn) == (0, 6, 0)

    def test_every_pair_lands_in_one_bucket(self):
        for p, t in itertools.product(range(4), range(4)):
            c = graded_counts([p], [t])
            assert c.total == 1
            assert (c.tp, c.fp, c.fn) == ((1, 0, 0) if p == t else
                                          (0, 1, 0) if p > t else (0, 0, 1))

    def test_matches_brute_force_random(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n = int(rng.integers(1, 30))
            preds = rng.integers(0, 4, size=n).tolist()
            truths = rng.integers(0, 4, size=n).tolist()
            c = graded_counts(preds, truths)
            assert (c.tp, c.fp, c.fn) == brute_force_counts(preds, truths)
            assert c.total == n

    def test_swap_symmetry(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            preds = rng.integers(0, 4, size=10).tolist()
            truths = rng.integers(0, 4, size=10).tolist()
            a = graded_counts(preds, truths)
            b = graded_counts(truths, preds)
            assert (a.tp, a.fp, a.fn) == (b.tp, b.fn, b.fp)
            sa, sb = graded_scores(a), graded_scores(b)
            assert sa.gp == pytest.approx(sb.gr)
            assert sa.fs == pytest.approx(sb.fs)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            graded_counts([1], [1, 2])


class TestGradedScores:
    def test_balanced_counts(self):
        s = graded_scores(GradedCounts(1, 1, 1))
        assert (s.gp, s.gr, s.fs) == (0.5, 0.5, 0.5)

    def test_perfect(self):
        s = graded_scores(GradedCounts(7, 0, 0))
        assert (s.gp, s.gr, s.fs) == (1.0, 1.0, 1.0)

    def test_zero_tp_convention(self):
        s = graded_scores(GradedCounts(0, 9, 0))
        assert (s.gp, s.gr, s.fs) == (0.0, 0.0, 0.0)

    def test_all_zero_rejected(self):
        with pytest.raises(ValueError):
            graded_scores(GradedCounts(0, 0, 0))


class TestMajorityBaseline:
    def test_majority_with_tie_toward_lower(self):
        assert majority_level_of([0, 0, 1, 1, 2]) == 0
        assert majority_level_of([2, 1, 1, 2]) == 1

    def test_baseline_scores_closed_form(self):
        train = [0, 0, 0, 1]
        test = [0, 0, 1, 2]
        # constant prediction 0: tp=2, fp=0, fn=2
        s = majority_baseline_scores(train, test)
        assert s.gp == pytest.approx(1.0)
        assert s.gr == pytest.approx(0.5)
        assert s.fs == pytest.approx(2 / 3)

    def test_agrees_with_explicit_constant_predictor(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            train = rng.integers(0, 4, size=40).tolist()
            test = rng.integers(0, 4, size=25).tolist()
            m = majority_level_of(train)
            direct = evaluate_levels([m] * len(test), test)
            via = majority_baseline_scores(train, test)
            assert direct == via
