"""Pairwise surrogate losses on (positive, negative) orderings.

Defines the squared and hinge pair losses, their sparse (sub)gradients, the
exact enumerated objective/gradient oracles over the opposite-pair space, and
O(n log n) vectorized equivalents for large datasets.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .data import Dataset, SparseVector
from .prox import Regularizer, reg_value


class PairLossKind(enum.Enum):
    SQUARED = "squared"  # (1 - <w, x - x'>)^2
    HINGE = "hinge"      # max(0, 1 - <w, x - x'>)


class Normalization(enum.Enum):
    """How pair sums are averaged.

    OPPOSITE_SPACE: mean over the n+ * n- (positive, negative) pairs.
    PAIR_SPACE: mean over all n(n-1) ordered pairs, same-label pairs
    contributing zero; equals OPPOSITE_SPACE times 2n+n-/(n(n-1)).
    """

    OPPOSITE_SPACE = "opposite-space"
    PAIR_SPACE = "pair-space"


@dataclass
class Model:
    """Linear scorer f(x) = <w, x>."""

    w: np.ndarray

    def scores(self, ds: Dataset) -> np.ndarray:
        return scores(self.w, ds)


def scores(w: np.ndarray, ds: Dataset) -> np.ndarray:
    if ds.n == 0:
        return np.zeros(0)
    return np.asarray(ds.matrix() @ w).ravel()


def pair_delta(x_pos: SparseVector, x_neg: SparseVector) -> tuple[np.ndarray, np.ndarray]:
    """Sparse difference x_pos - x_neg as (sorted indices, values)."""
    if x_pos.dim != x_neg.dim:
        raise ValueError(f"dimension mismatch: {x_pos.dim} vs {x_neg.dim}")
    union = np.union1d(x_pos.indices, x_neg.indices)
    vals = np.zeros(union.size)
    vals[np.searchsorted(union, x_pos.indices)] += x_pos.values
    vals[np.searchsorted(union, x_neg.indices)] -= x_neg.values
    return union, vals


def _margin(w: np.ndarray, idx: np.ndarray, dvals: np.ndarray) -> float:
    if idx.size == 0:
        return 0.0
    return float(np.dot(w[idx], dvals))


def pair_loss(kind: PairLossKind, w: np.ndarray, x_pos: SparseVector, x_neg: SparseVector) -> float:
    idx, dvals = pair_delta(x_pos, x_neg)
    m = _margin(w, idx, dvals)
    if kind is PairLossKind.SQUARED:
        return (1.0 - m) ** 2
    return max(0.0, 1.0 - m)


def pair_grad(kind: PairLossKind, w: np.ndarray, x_pos: SparseVector, x_neg: SparseVector) -> SparseVector:
    """Sparse (sub)gradient; support is contained in support(x_pos - x_neg).

    Squared: -2(1 - <w,D>) D.  Hinge: -D when <w,D> < 1, else 0 (the zero
    subgradient is chosen at the kink).
    """
    idx, dvals = pair_delta(x_pos, x_neg)
    m = _margin(w, idx, dvals)
    if kind is PairLossKind.SQUARED:
        coef = -2.0 * (1.0 - m)
    else:
        coef = -1.0 if m < 1.0 else 0.0
    return SparseVector.from_pairs(idx, coef * dvals, x_pos.dim)


def _loss_sum_enumerated(kind: PairLossKind, w: np.ndarray, ds: Dataset) -> float:
    total = 0.0
    for i in ds.pos_idx:
        for j in ds.neg_idx:
            total += pair_loss(kind, w, ds.rows[i], ds.rows[j])
    return total


def full_objective(
    kind: PairLossKind,
    w: np.ndarray,
    ds: Dataset,
    reg: Regularizer | None = None,
    normalization: Normalization = Normalization.OPPOSITE_SPACE,
) -> float:
    """Exact objective by enumerating every (positive, negative) pair in order."""
    ds.require_both_classes()
    total = _loss_sum_enumerated(kind, w, ds)
    loss = _normalize_sum(total, ds, normalization)
    return loss + (reg_value(reg, w) if reg is not None else 0.0)


def full_gradient(
    kind: PairLossKind,
    w: np.ndarray,
    ds: Dataset,
    normalization: Normalization = Normalization.OPPOSITE_SPACE,
) -> np.ndarray:
    """Exact loss-part gradient by the same enumeration order as full_objective."""
    ds.require_both_classes()
    acc = np.zeros(ds.dim)
    for i in ds.pos_idx:
        for j in ds.neg_idx:
            g = pair_grad(kind, w, ds.rows[i], ds.rows[j])
            if g.nnz:
                acc[g.indices] += g.values
    return _normalize_sum(acc, ds, normalization)


def _normalize_sum(total, ds: Dataset, normalization: Normalization):
    if normalization is Normalization.OPPOSITE_SPACE:
        return total / (ds.n_pos * ds.n_neg)
    # both orderings of each opposite pair over the n(n-1) ordered-pair space
    return 2.0 * total / (ds.n * (ds.n - 1))


def objective_fast(
    kind: PairLossKind,
    w: np.ndarray,
    ds: Dataset,
    reg: Regularizer | None = None,
    normalization: Normalization = Normalization.OPPOSITE_SPACE,
) -> float:
    """O(n log n) objective via scores; agrees with full_objective to fp accuracy."""
    ds.require_both_classes()
    s = scores(w, ds)
    a = s[ds.pos_idx]
    b = s[ds.neg_idx]
    if kind is PairLossKind.SQUARED:
        # sum_ij ((1 - a_i) + b_j)^2 expands into marginal sums
        one_a = 1.0 - a
        total = (
            ds.n_neg * float(np.dot(one_a, one_a))
            + 2.0 * float(one_a.sum()) * float(b.sum())
            + ds.n_pos * float(np.dot(b, b))
        )
    else:
        # sum_ij max(0, 1 - a_i + b_j) via sorted partial sums over b
        b_sorted = np.sort(b)
        csum = np.concatenate([[0.0], np.cumsum(b_sorted)])
        # terms with b_j > a_i - 1 are active
        k = np.searchsorted(b_sorted, a - 1.0, side="right")
        active = ds.n_neg - k
        tail = csum[-1] - csum[k]
        total = float(np.sum((1.0 - a) * active + tail))
    loss = _normalize_sum(total, ds, normalization)
    return loss + (reg_value(reg, w) if reg is not None else 0.0)


def gradient_fast_squared(
    w: np.ndarray,
    ds: Dataset,
    normalization: Normalization = Normalization.OPPOSITE_SPACE,
) -> np.ndarray:
    """Vectorized loss gradient for the squared pair loss (O(n d) via marginals)."""
    ds.require_both_classes()
    s = scores(w, ds)
    a = s[ds.pos_idx]
    b = s[ds.neg_idx]
    Xp = ds.matrix()[ds.pos_idx]
    Xn = ds.matrix()[ds.neg_idx]
    # d/dw sum_ij (1 - a_i + b_j)^2
    #   = sum_i x_i * -2(n-(1-a_i) + sum_j b_j) + sum_j x_j * 2(n+(1+b_j) - sum_i a_i)
    sum_b = float(b.sum())
    sum_a = float(a.sum())
    coef_pos = -2.0 * (ds.n_neg * (1.0 - a) + sum_b)
    coef_neg = 2.0 * (ds.n_pos * (1.0 + b) - sum_a)
    total = np.asarray(Xp.T @ coef_pos).ravel() + np.asarray(Xn.T @ coef_neg).ravel()
    return _normalize_sum(total, ds, normalization)
