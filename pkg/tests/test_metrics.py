import itertools

import numpy as np
import pytest
import scipy.stats

from odselect.errors import NoPositivesError, TooFewPairsError
from odselect.metrics import average_precision, wilcoxon_signed_rank


def ap_brute_force(scores, labels):
    """Independent oracle: precision at each positive's rank, ranked by
    (-score, index)."""
    n = len(scores)
    order = sorted(range(n), key=lambda i: (-scores[i], i))
    precisions = []
    hits = 0
    for r, i in enumerate(order, start=1):
        if labels[i] == 1:
            hits += 1
            precisions.append(hits / r)
    return sum(precisions) / len(precisions)


def wilcoxon_enumerate(x, y):
    """Independent oracle: full 2^n sign enumeration of the null."""
    d = np.asarray(x, float) - np.asarray(y, float)
    d = d[d != 0]
    n = len(d)
    ranks = scipy.stats.rankdata(np.abs(d))
    t_obs = ranks[d > 0].sum()
    stats = []
    for signs in itertools.product([0, 1], repeat=n):
        stats.append(sum(r for s, r in zip(signs, ranks) if s))
    stats = np.asarray(stats)
    cdf_le = np.mean(stats <= t_obs + 1e-12)
    cdf_ge = np.mean(stats >= t_obs - 1e-12)
    return min(1.0, 2.0 * min(cdf_le, cdf_ge))


class TestAveragePrecision:
    def test_perfect_ranking(self):
        assert average_precision([0.9, 0.1], [1, 0]) == 1.0

    def test_single_positive_at_rank_two(self):
        assert average_precision([0.9, 0.1], [0, 1]) == 0.5

    def test_hand_example(self):
        assert average_precision([3, 2, 1], [1, 0, 1]) == pytest.approx((1 + 2 / 3) / 2)

    def test_ties_resolved_by_index(self):
        assert average_precision([0.5, 0.5], [1, 0]) == 1.0
        assert average_precision([0.5, 0.5], [0, 1]) == 0.5

    def test_monotone_transform_invariance(self, rng):
        for _ in range(20):
            s = rng.normal(0, 1, 30)
            y = (rng.random(30) < 0.2).astype(int)
            if y.sum() == 0:
                y[0] = 1
            a = average_precision(s, y)
            assert average_precision(3 * s + 7, y) == pytest.approx(a)
            assert average_precision(np.exp(s), y) == pytest.approx(a)

    def test_matches_brute_force(self, rng):
        for _ in range(200):
            n = int(rng.integers(2, 40))
            s = rng.normal(0, 1, n)
            if rng.random() < 0.3:  # force ties
                s = np.round(s, 1)
            y = (rng.random(n) < 0.3).astype(int)
            if y.sum() == 0:
                y[int(rng.integers(n))] = 1
            assert average_precision(s, y) == pytest.approx(
                ap_brute_force(list(s), list(y)), abs=1e-12
            )

    def test_no_positives(self):
        with pytest.raises(NoPositivesError):
            average_precision([1.0, 2.0], [0, 0])


class TestWilcoxon:
    def test_identical_samples_rejected(self):
        with pytest.raises(TooFewPairsError):
            wilcoxon_signed_rank([1, 2, 3, 4, 5, 6], [1, 2, 3, 4, 5, 6])

    def test_six_positive_differences(self):
        x = np.arange(6, dtype=float) + 1
        y = np.zeros(6)
        assert wilcoxon_signed_rank(x, y) == pytest.approx(2 / 64)

    def test_antisymmetry(self, rng):
        x = rng.normal(0, 1, 12)
        y = rng.normal(0.3, 1, 12)
        assert wilcoxon_signed_rank(x, y) == pytest.approx(wilcoxon_signed_rank(y, x))

    def test_exact_matches_enumeration(self, rng):
        for _ in range(60):
            n = int(rng.integers(6, 11))
            x = rng.normal(0, 1, n)
            y = x + rng.choice([-0.5, 0.5, 1.0, -1.0], n)
            if rng.random() < 0.5:  # force tied |differences|
                y = x + rng.choice([-1.0, 1.0], n)
            p = wilcoxon_signed_rank(x, y)
            assert p == pytest.approx(wilcoxon_enumerate(x, y), abs=1e-12)

    def test_normal_approximation_against_scipy(self, rng):
        for _ in range(20):
            n = int(rng.integers(20, 60))
            x = rng.normal(0, 1, n)
            y = x + rng.normal(0.2, 0.7, n)
            ours = wilcoxon_signed_rank(x, y)
            ref = scipy.stats.wilcoxon(x, y, correction=True, method="approx").pvalue
            assert ours == pytest.approx(ref, abs=1e-9)
