"""Pair sampling laws, importance-weighted stochastic gradients, and variance.

Two sampling laws are supported: uniform over all ordered pairs i != j, and
opposite-label-only (one positive, one negative).  Importance weights make the
single-pair gradient an unbiased estimator of the full loss gradient under
either normalization of the objective.
"""

from __future__ import annotations

from dataclasses import dataclass
import enum

import numpy as np

from .data import Dataset, SparseVector
from .pairloss import Normalization, PairLossKind, full_gradient, pair_grad


class DistKind(enum.Enum):
    UNIFORM_PAIRS = "uniform"
    OPPOSITE_ONLY = "opposite"


@dataclass(frozen=True)
class PairDistribution:
    """Sampling law over ordered pairs of a fixed dataset."""

    kind: DistKind
    n: int
    n_pos: int
    n_neg: int

    @staticmethod
    def for_dataset(kind: DistKind, ds: Dataset) -> "PairDistribution":
        if kind is DistKind.OPPOSITE_ONLY:
            ds.require_both_classes("sampling subset")
        elif ds.n < 2:
            raise ValueError("uniform pair sampling needs n >= 2")
        return PairDistribution(kind, ds.n, ds.n_pos, ds.n_neg)

    def prob(self, yi: int, yj: int) -> float:
        """P of one ordered pair with the given labels."""
        if self.kind is DistKind.UNIFORM_PAIRS:
            return 1.0 / (self.n * (self.n - 1))
        if yi == 1 and yj == -1 or yi == -1 and yj == 1:
            return 1.0 / (2 * self.n_pos * self.n_neg)
        return 0.0


def sample_pair(dist: PairDistribution, gen: np.random.Generator, ds: Dataset) -> tuple[int, int]:
    """Draw one ordered pair of row ids (with replacement across calls).

    OPPOSITE_ONLY returns the canonical (positive, negative) ordering.
    """
    if dist.kind is DistKind.OPPOSITE_ONLY:
        i = int(ds.pos_idx[gen.integers(0, ds.n_pos)])
        j = int(ds.neg_idx[gen.integers(0, ds.n_neg)])
        return i, j
    i = int(gen.integers(0, ds.n))
    j = int(gen.integers(0, ds.n - 1))
    if j >= i:
        j += 1
    return i, j


def importance_weight(
    dist: PairDistribution, yi: int, yj: int, target: Normalization
) -> float:
    """Multiplier making the sampled pair gradient unbiased for the target gradient."""
    opposite = yi != yj
    if dist.kind is DistKind.OPPOSITE_ONLY:
        if not opposite:
            raise ValueError("zero-probability pair under opposite-only sampling")
        if target is Normalization.PAIR_SPACE:
            return 2.0 * dist.n_pos * dist.n_neg / (dist.n * (dist.n - 1))
        return 1.0
    if not opposite:
        return 0.0
    if target is Normalization.PAIR_SPACE:
        return 1.0
    return dist.n * (dist.n - 1) / (2.0 * dist.n_pos * dist.n_neg)


def _canonical(ds: Dataset, i: int, j: int) -> tuple[SparseVector, SparseVector] | None:
    yi, yj = int(ds.labels[i]), int(ds.labels[j])
    if yi == 1 and yj == -1:
        return ds.rows[i], ds.rows[j]
    if yi == -1 and yj == 1:
        return ds.rows[j], ds.rows[i]
    return None


def stochastic_gradient(
    kind: PairLossKind,
    w: np.ndarray,
    dist: PairDistribution,
    gen: np.random.Generator,
    ds: Dataset,
    target: Normalization = Normalization.OPPOSITE_SPACE,
) -> SparseVector:
    """One importance-weighted single-pair gradient draw."""
    i, j = sample_pair(dist, gen, ds)
    return _pair_estimator(kind, w, dist, ds, i, j, target)


def _pair_estimator(kind, w, dist, ds, i, j, target) -> SparseVector:
    weight = importance_weight(dist, int(ds.labels[i]), int(ds.labels[j]), target)
    pair = _canonical(ds, i, j)
    if pair is None or weight == 0.0:
        return SparseVector.from_pairs([], [], ds.dim)
    g = pair_grad(kind, w, pair[0], pair[1])
    return SparseVector.from_pairs(g.indices, weight * g.values, ds.dim)


def _enumerate_pairs(dist: PairDistribution, ds: Dataset):
    """(probability, i, j) triples of the sampling law, canonical enumeration order."""
    if dist.kind is DistKind.OPPOSITE_ONLY:
        p = 1.0 / (dist.n_pos * dist.n_neg)
        for i in ds.pos_idx:
            for j in ds.neg_idx:
                yield p, int(i), int(j)
    else:
        p = 1.0 / (dist.n * (dist.n - 1))
        for i in range(ds.n):
            for j in range(ds.n):
                if i != j:
                    yield p, i, j


def expected_gradient(
    kind: PairLossKind,
    w: np.ndarray,
    dist: PairDistribution,
    ds: Dataset,
    target: Normalization = Normalization.OPPOSITE_SPACE,
) -> np.ndarray:
    """Exact expectation of the importance-weighted stochastic gradient."""
    acc = np.zeros(ds.dim)
    for p, i, j in _enumerate_pairs(dist, ds):
        g = _pair_estimator(kind, w, dist, ds, i, j, target)
        if g.nnz:
            acc[g.indices] += p * g.values
    return acc


def variance_exact(
    kind: PairLossKind,
    w: np.ndarray,
    dist: PairDistribution,
    ds: Dataset,
    target: Normalization = Normalization.OPPOSITE_SPACE,
    max_pairs: int = 2000,
) -> float:
    """Exact Var[g] = sum_pairs P(i,j) ||g_ij - E g||^2 by enumeration."""
    count = (
        dist.n_pos * dist.n_neg
        if dist.kind is DistKind.OPPOSITE_ONLY
        else dist.n * (dist.n - 1)
    )
    if count > max_pairs:
        raise ValueError(
            f"{count} pairs exceed the enumeration cap {max_pairs}; use variance_mc"
        )
    mean = expected_gradient(kind, w, dist, ds, target)
    var = 0.0
    for p, i, j in _enumerate_pairs(dist, ds):
        g = _pair_estimator(kind, w, dist, ds, i, j, target)
        diff = -mean.copy()
        if g.nnz:
            diff[g.indices] += g.values
        var += p * float(np.dot(diff, diff))
    return var


def variance_mc(
    kind: PairLossKind,
    w: np.ndarray,
    dist: PairDistribution,
    ds: Dataset,
    num_draws: int,
    gen_seed: int,
    target: Normalization = Normalization.OPPOSITE_SPACE,
) -> tuple[float, float]:
    """Monte-Carlo estimate of Var[g]: two passes over the same seeded draws.

    Returns (mean of ||g - g_bar||^2, standard error of that mean).
    """
    if num_draws < 2:
        raise ValueError("need at least 2 draws")
    from .rng import SeedStream

    def draws():
        gen = SeedStream(gen_seed).generator("variance-mc")
        for _ in range(num_draws):
            yield stochastic_gradient(kind, w, dist, gen, ds, target)

    g_bar = np.zeros(ds.dim)
    for g in draws():
        if g.nnz:
            g_bar[g.indices] += g.values
    g_bar /= num_draws

    sq = np.empty(num_draws)
    for k, g in enumerate(draws()):
        diff = -g_bar.copy()
        if g.nnz:
            diff[g.indices] += g.values
        sq[k] = float(np.dot(diff, diff))
    mean = float(sq.mean())
    stderr = float(sq.std(ddof=1) / np.sqrt(num_draws))
    return mean, stderr


def check_unbiased(
    kind: PairLossKind,
    w: np.ndarray,
    dist: PairDistribution,
    ds: Dataset,
    target: Normalization,
) -> float:
    """Relative error between the exact estimator expectation and full_gradient."""
    expect = expected_gradient(kind, w, dist, ds, target)
    exact = full_gradient(kind, w, ds, target)
    denom = max(float(np.linalg.norm(exact)), 1e-300)
    return float(np.linalg.norm(expect - exact)) / denom
