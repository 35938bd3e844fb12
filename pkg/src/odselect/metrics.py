"""Ranking metrics: average precision and the paired signed-rank test."""

from __future__ import annotations

import math

import numpy as np
from scipy.stats import rankdata

from .errors import NoPositivesError, TooFewPairsError


def average_precision(scores, labels) -> float:
    """Area under the precision-recall curve as precision-at-positive-ranks.

    Rows are ranked by descending score; equal scores keep their original
    order (smaller index ranks higher), which makes the value deterministic.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have equal length")
    n_pos = int((labels == 1).sum())
    if n_pos == 0:
        raise NoPositivesError("average precision needs at least one positive label")
    order = np.argsort(-scores, kind="stable")
    ranked = (labels[order] == 1)
    hits = np.cumsum(ranked)
    ranks = np.flatnonzero(ranked) + 1
    return float(np.mean(hits[ranks - 1] / ranks))


def _exact_signed_rank_p(weights2: np.ndarray, t2: int, n: int) -> float:
    # distribution of 2*T+ over all 2^n sign assignments, by subset-sum counting
    total = int(weights2.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for w in weights2:
        shifted = np.zeros_like(counts)
        shifted[w:] = counts[: counts.size - w]
        counts = counts + shifted
    denom = 2.0 ** n
    cdf_le = counts[: t2 + 1].sum() / denom
    cdf_ge = counts[t2:].sum() / denom
    return min(1.0, 2.0 * min(cdf_le, cdf_ge))


def wilcoxon_signed_rank(x, y) -> float:
    """Two-sided Wilcoxon signed-rank p-value for paired samples.

    Zero differences are dropped and tied magnitudes get average ranks.  The
    null distribution is enumerated exactly for up to 15 nonzero differences;
    beyond that a normal approximation with tie and continuity corrections is
    used.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("paired samples must have equal length")
    d = x - y
    d = d[d != 0.0]
    n = d.size
    if n < 6:
        raise TooFewPairsError(f"need at least 6 nonzero differences, got {n}")
    ranks = rankdata(np.abs(d))
    t_plus = float(ranks[d > 0].sum())
    if n <= 15:
        # average ranks are half-integers, so doubled ranks are exact ints
        weights2 = np.round(2.0 * ranks).astype(np.int64)
        return _exact_signed_rank_p(weights2, int(round(2.0 * t_plus)), n)
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var -= float(((tie_counts ** 3 - tie_counts) / 48.0).sum())
    sd = math.sqrt(var)
    z = (abs(t_plus - mean) - 0.5) / sd
    return min(1.0, math.erfc(max(z, 0.0) / math.sqrt(2.0)))
