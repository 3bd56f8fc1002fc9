"""AUC computation (quadratic oracle and O(n log n) rank form) and summary stats."""

from __future__ import annotations

import enum

import numpy as np


class TiesPolicy(enum.Enum):
    HALF = "half"      # tied (positive, negative) pairs count 0.5
    STRICT = "strict"  # ties count 0 (strict indicator)


def _split_scores(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == -1]
    if pos.size == 0 or neg.size == 0:
        raise ValueError("AUC needs at least one score of each class")
    return pos, neg


def auc_bruteforce(scores, labels, ties: TiesPolicy = TiesPolicy.HALF) -> float:
    """Mean over all (positive, negative) pairs of 1[s+ > s-] (+ tie credit)."""
    pos, neg = _split_scores(scores, labels)
    wins = np.sum(pos[:, None] > neg[None, :])
    if ties is TiesPolicy.HALF:
        wins = wins + 0.5 * np.sum(pos[:, None] == neg[None, :])
    return float(wins) / (pos.size * neg.size)


def auc_rank(scores, labels, ties: TiesPolicy = TiesPolicy.HALF) -> float:
    """Rank-statistic AUC via midranks; equals auc_bruteforce(HALF) exactly."""
    pos, neg = _split_scores(scores, labels)
    alln = np.concatenate([pos, neg])
    order = np.argsort(alln, kind="stable")
    ranks = np.empty(alln.size)
    sorted_vals = alln[order]
    # midranks over groups of equal value
    k = 0
    while k < sorted_vals.size:
        k2 = k
        while k2 + 1 < sorted_vals.size and sorted_vals[k2 + 1] == sorted_vals[k]:
            k2 += 1
        ranks[order[k : k2 + 1]] = 0.5 * (k + k2) + 1.0
        k = k2 + 1
    rank_sum_pos = float(ranks[: pos.size].sum())
    u = rank_sum_pos - pos.size * (pos.size + 1) / 2.0
    auc_half = u / (pos.size * neg.size)
    if ties is TiesPolicy.HALF:
        return auc_half
    # strict: remove half of the tie mass between classes
    vals, counts_all = np.unique(alln, return_counts=True)
    counts_pos = np.zeros(vals.size)
    idx = np.searchsorted(vals, pos)
    np.add.at(counts_pos, idx, 1.0)
    tie_mass = float(np.dot(counts_pos, counts_all - counts_pos)) / (pos.size * neg.size)
    return auc_half - 0.5 * tie_mass


def mean_stderr(values) -> tuple[float, float]:
    """(mean, sample standard deviation / sqrt(k)); k >= 2 required for stderr."""
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        raise ValueError("stderr undefined for fewer than 2 values")
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(values.size))
