"""Stagewise pair-sampling proximal SGD.

The adaptive trainer solves a chain of subproblems on nested, geometrically
growing prefixes of one seeded permutation, warm-starting each stage from the
previous solution.  The inner loop samples one pair per iteration, forms the
importance-weighted gradient, and applies the elastic-net prox through the
lazy shrink state so the per-iteration cost stays O(nnz of the pair).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset, stage_permutation, prefix_view
from .metrics import auc_rank
from .pairloss import (
    Model,
    Normalization,
    PairLossKind,
    gradient_fast_squared,
    objective_fast,
    scores,
)
from .prox import LazyShrinkState, Regularizer, prox_elastic_net
from .rng import SeedStream
from .sampling import DistKind, PairDistribution, importance_weight


class DivergenceError(RuntimeError):
    """Non-finite iterate; carries the 1-based iteration index."""

    def __init__(self, iteration: int):
        super().__init__(
            f"non-finite iterate at inner iteration {iteration}; "
            "reduce the step size (gamma)"
        )
        self.iteration = iteration


@dataclass(frozen=True)
class ConstantStep:
    gamma: float

    def gamma_for(self, m: int) -> float:
        return self.gamma


@dataclass(frozen=True)
class PerStageStep:
    """gamma_s = gamma0 / m_s**exponent."""

    gamma0: float = 1.0
    exponent: float = 0.5

    def gamma_for(self, m: int) -> float:
        return self.gamma0 / m**self.exponent


@dataclass(frozen=True)
class LinearInner:
    """T_s = m_s (one pass worth of pair draws per stage)."""

    def iters_for(self, m: int) -> int:
        return m


@dataclass(frozen=True)
class PowerLawInner:
    """T_s = ceil(c * m_s^(4/3)), the stability/convergence trade-off count."""

    c: float = 1.0

    def iters_for(self, m: int) -> int:
        return max(1, math.ceil(self.c * m ** (4.0 / 3.0)))


@dataclass(frozen=True)
class FixedInner:
    iters: int

    def iters_for(self, m: int) -> int:
        return self.iters


@dataclass(frozen=True)
class TrainConfig:
    loss: PairLossKind = PairLossKind.SQUARED
    reg: Regularizer = Regularizer()
    dist: DistKind = DistKind.OPPOSITE_ONLY
    normalization: Normalization = Normalization.OPPOSITE_SPACE
    step: object = PerStageStep()
    inner: object = LinearInner()
    beta: float = 2.0
    m0: int = 64
    alpha: float = 0.5
    seed: int = 0
    stratify: bool = False
    first_stage_boost: int = 3


@dataclass
class StageRecord:
    stage: int
    m: int
    iters: int
    gamma: float
    seconds: float
    objective: float
    test_auc: float


@dataclass
class TrainTrace:
    stages: list[StageRecord] = field(default_factory=list)

    @property
    def grad_evals(self) -> int:
        return sum(s.iters for s in self.stages)

    @property
    def total_seconds(self) -> float:
        return sum(s.seconds for s in self.stages)


def stage_sizes(n: int, m0: int, beta: float) -> list[int]:
    """m_1 = m0, m_{s+1} = min(ceil(beta*m_s), n), stopping once m_s = n."""
    if not 2 <= m0 <= n:
        raise ValueError(f"m0 must lie in [2, n]; got m0={m0}, n={n}")
    if beta <= 1.0:
        raise ValueError("beta must exceed 1")
    sizes = [m0]
    while sizes[-1] < n:
        grown = beta * sizes[-1]
        # guard fp slop like 1.1*10 -> 11.000000000000002
        sizes.append(min(math.ceil(grown - 1e-9), n))
    return sizes


def _predraw_pairs(dist_kind: DistKind, gen, ds: Dataset, T: int):
    """Row-id arrays (i_t, j_t) for T draws, consumed in iteration order."""
    if dist_kind is DistKind.OPPOSITE_ONLY:
        ds.require_both_classes("sampling subset")
        ii = ds.pos_idx[gen.integers(0, ds.n_pos, size=T)]
        jj = ds.neg_idx[gen.integers(0, ds.n_neg, size=T)]
        return ii, jj
    if ds.n < 2:
        raise ValueError("uniform pair sampling needs n >= 2")
    ii = gen.integers(0, ds.n, size=T)
    jj = gen.integers(0, ds.n - 1, size=T)
    jj = jj + (jj >= ii)
    return ii, jj


def _run_inner(
    state: LazyShrinkState,
    stage_ds: Dataset,
    T: int,
    gamma: float,
    config: TrainConfig,
    gen,
) -> None:
    """T pair-gradient prox steps on the lazy state (mutated in place)."""
    if T < 1:
        raise ValueError("inner iteration count must be >= 1")
    state.begin_stage(gamma, config.reg)
    dist = PairDistribution.for_dataset(config.dist, stage_ds)
    ii, jj = _predraw_pairs(config.dist, gen, stage_ds, T)
    rows = stage_ds.rows
    labels = stage_ds.labels
    squared = config.loss is PairLossKind.SQUARED
    const_weight = None
    if config.dist is DistKind.OPPOSITE_ONLY:
        const_weight = importance_weight(dist, 1, -1, config.normalization)
    # overflow shows up as a non-finite iterate and raises below, not as a warning
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(T):
            i = ii[t]
            j = jj[t]
            yi = labels[i]
            if const_weight is not None:
                weight = const_weight
                xp, xn = rows[i], rows[j]
            else:
                yj = labels[j]
                if yi == yj:
                    # zero-weight pair: pure shrink step
                    state.step(_EMPTY_IDX, _EMPTY_VAL, gamma)
                    continue
                weight = importance_weight(dist, int(yi), int(yj), config.normalization)
                xp, xn = (rows[i], rows[j]) if yi == 1 else (rows[j], rows[i])
            union = np.union1d(xp.indices, xn.indices)
            dvals = np.zeros(union.size)
            dvals[np.searchsorted(union, xp.indices)] += xp.values
            dvals[np.searchsorted(union, xn.indices)] -= xn.values
            w_vals = state.read(union)
            margin = float(np.dot(w_vals, dvals))
            if squared:
                coef = -2.0 * (1.0 - margin) * weight
            else:
                coef = -weight if margin < 1.0 else 0.0
            w_new = state.step(union, coef * dvals, gamma)
            if not np.all(np.isfinite(w_new)):
                raise DivergenceError(t + 1)


_EMPTY_IDX = np.zeros(0, dtype=np.int64)
_EMPTY_VAL = np.zeros(0)


def inner_dsgd(
    w0: np.ndarray,
    stage_ds: Dataset,
    T: int,
    gamma: float,
    config: TrainConfig,
    gen,
) -> np.ndarray:
    """Run the inner loop from a dense start and return the dense iterate w_T."""
    state = LazyShrinkState(np.asarray(w0, dtype=np.float64))
    _run_inner(state, stage_ds, T, gamma, config, gen)
    return state.dense()


def train_adaptive(
    ds: Dataset,
    config: TrainConfig,
    eval_ds: Dataset | None = None,
    clock=time.perf_counter,
) -> tuple[Model, TrainTrace]:
    """Full stagewise run: nested prefixes, warm starts, last-iterate output.

    The first stage starts from w = 0 with its budget multiplied by
    first_stage_boost (only when more than one stage runs), standing in for an
    already-accurate initial point.  Later stages warm-start from the previous
    stage's output.
    """
    ds.require_both_classes("training set")
    sizes = stage_sizes(ds.n, config.m0, config.beta)
    perm = stage_permutation(ds, config.seed, config.stratify)
    stream = SeedStream(config.seed)
    state = LazyShrinkState(np.zeros(ds.dim))
    trace = TrainTrace()
    for s, m in enumerate(sizes, start=1):
        stage_ds = prefix_view(ds, perm, m)
        gamma = config.step.gamma_for(m)
        iters = config.inner.iters_for(m)
        if s == 1 and len(sizes) > 1:
            iters *= config.first_stage_boost
        t0 = clock()
        _run_inner(state, stage_ds, iters, gamma, config, stream.generator("inner", s))
        seconds = clock() - t0
        w = state.flush()
        objective = objective_fast(config.loss, w, ds, config.reg, config.normalization)
        test_auc = (
            auc_rank(scores(w, eval_ds), eval_ds.labels) if eval_ds is not None else float("nan")
        )
        trace.stages.append(StageRecord(s, m, iters, gamma, seconds, objective, test_auc))
    return Model(state.dense()), trace


def train_plain(
    ds: Dataset,
    config: TrainConfig,
    eval_ds: Dataset | None = None,
    clock=time.perf_counter,
) -> tuple[Model, TrainTrace]:
    """Non-adaptive baseline: a single stage over the full dataset."""
    return train_adaptive(ds, replace(config, m0=ds.n), eval_ds, clock)


def reference_minimizer(
    ds: Dataset,
    reg: Regularizer,
    gamma: float,
    steps: int,
    normalization: Normalization = Normalization.OPPOSITE_SPACE,
    w0: np.ndarray | None = None,
) -> np.ndarray:
    """Deterministic full-batch prox-gradient run for the squared pair loss.

    Serves as the long-run reference for computing near-exact minimizers on
    fixture problems.
    """
    w = np.zeros(ds.dim) if w0 is None else np.array(w0, dtype=np.float64)
    for _ in range(steps):
        g = gradient_fast_squared(w, ds, normalization)
        w = prox_elastic_net(w - gamma * g, gamma, reg)
    return w


def equal_budget_fixed_iters(ds: Dataset, config: TrainConfig) -> int:
    """Total pair-gradient budget of an adaptive run with this config."""
    sizes = stage_sizes(ds.n, config.m0, config.beta)
    total = 0
    for s, m in enumerate(sizes, start=1):
        iters = config.inner.iters_for(m)
        if s == 1 and len(sizes) > 1:
            iters *= config.first_stage_boost
        total += iters
    return total
