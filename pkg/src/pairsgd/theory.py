"""Closed-form bound calculators and the empirical replace-one stability probe."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset, SparseVector
from .optimizer import TrainConfig, stage_sizes, train_adaptive
from .pairloss import PairLossKind, pair_loss


@dataclass(frozen=True)
class TheoryConstants:
    """User-supplied problem constants for the bound calculators.

    G: Lipschitz constant of the pair loss (auto-computable for hinge on
    bounded data; valid for the squared loss only on a stated iterate ball).
    mu: strong-convexity modulus.  L: smoothness constant.  sigma2: gradient
    variance bound.
    """

    G: float = 0.0
    mu: float = 0.0
    L: float = 0.0
    sigma2: float = 0.0


def statistical_accuracy(m: int, alpha: float) -> float:
    """V_m = m**(-alpha), the sample-size accuracy scale (unit constant)."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if not 0.0 <= alpha <= 0.5:
        raise ValueError("alpha must lie in [0, 0.5]")
    return float(m) ** (-alpha)


def warm_start_bound(delta_m: float, m: int, n: int, alpha: float) -> float:
    """Warm-start suboptimality carried from a subset of size m to the full n."""
    if m > n:
        raise ValueError("m must not exceed n")
    return delta_m + 2.0 * ((n - m) / n) * statistical_accuracy(m, alpha)


def stability_generalization_bound(G: float, n: int, gammas) -> float:
    """4 G^2 (n(n-1))^{-1} sqrt(sum gamma_t^2) generalization bound."""
    if n < 2:
        raise ValueError("n must be >= 2")
    gammas = np.asarray(gammas, dtype=np.float64)
    return 4.0 * G * G / (n * (n - 1)) * float(np.sqrt(np.dot(gammas, gammas)))


def stability_generalization_bound_const(G: float, n: int, gamma: float, T: int) -> float:
    """Constant-step shortcut: 4 G^2 gamma (n(n-1))^{-1} sqrt(T)."""
    if n < 2:
        raise ValueError("n must be >= 2")
    return 4.0 * G * G * gamma / (n * (n - 1)) * math.sqrt(T)


def optimal_inner_iters(G: float, mu: float, gamma: float, n: int) -> int:
    """Stationary point of A/T + B sqrt(T), A = 1/(gamma mu), B = 4 G^2 gamma/(n(n-1)).

    T* = ceil((2A/B)^(2/3)), asymptotically Theta(n^(4/3)).
    """
    if min(G, mu, gamma) <= 0 or n < 2:
        raise ValueError("all constants must be positive and n >= 2")
    a = 1.0 / (gamma * mu)
    b = 4.0 * G * G * gamma / (n * (n - 1))
    return max(1, math.ceil((2.0 * a / b) ** (2.0 / 3.0)))


def inner_iteration_objective(T: int, G: float, mu: float, gamma: float, n: int) -> float:
    """The trade-off objective A/T + B sqrt(T) minimized by optimal_inner_iters."""
    a = 1.0 / (gamma * mu)
    b = 4.0 * G * G * gamma / (n * (n - 1))
    return a / T + b * math.sqrt(T)


def convergence_bound(r0_gap: float, gamma: float, mu: float, sigma2: float, T: int) -> float:
    """(1/(gamma mu T)) * gap + gamma * sigma^2."""
    if gamma <= 0 or mu <= 0 or T <= 0:
        raise ValueError("gamma, mu, T must be positive")
    return r0_gap / (gamma * mu * T) + gamma * sigma2


def hinge_lipschitz_bound(ds: Dataset) -> float:
    """G for the hinge pair loss: ||grad|| <= ||x - x'|| <= 2 * max row norm."""
    return 2.0 * ds.max_row_norm()


def realized_step_sizes(ds: Dataset, config: TrainConfig) -> list[float]:
    """The per-iteration step-size sequence an adaptive run would use."""
    sizes = stage_sizes(ds.n, config.m0, config.beta)
    gammas: list[float] = []
    for s, m in enumerate(sizes, start=1):
        iters = config.inner.iters_for(m)
        if s == 1 and len(sizes) > 1:
            iters *= config.first_stage_boost
        gammas.extend([config.step.gamma_for(m)] * iters)
    return gammas


def stability_probe(
    ds: Dataset,
    config: TrainConfig,
    replace_index: int,
    replacement: tuple[SparseVector, int],
    probe_points: list[tuple[SparseVector, SparseVector]],
    squared_radius: float | None = None,
) -> tuple[float, float]:
    """Replace-one sensitivity of the learned pair loss, with its analytic bound.

    Trains on ds and on ds with row `replace_index` swapped for `replacement`,
    using identical random streams so the datum is the only perturbation.
    measured = max over probe points of |loss(w_S) - loss(w_S_i)|.
    bound = half the generalization display (the stability epsilon itself).
    The ordering measured <= bound is reported, never asserted here.
    """
    x_new, y_new = replacement
    rows = list(ds.rows)
    labels = ds.labels.copy()
    rows[replace_index] = x_new
    labels[replace_index] = y_new
    ds_mod = Dataset(rows, labels, ds.dim)

    model_a, _ = train_adaptive(ds, config, clock=lambda: 0.0)
    model_b, _ = train_adaptive(ds_mod, config, clock=lambda: 0.0)

    measured = 0.0
    for xp, xn in probe_points:
        la = pair_loss(config.loss, model_a.w, xp, xn)
        lb = pair_loss(config.loss, model_b.w, xp, xn)
        measured = max(measured, abs(la - lb))

    if config.loss is PairLossKind.HINGE:
        G = hinge_lipschitz_bound(ds)
    else:
        if squared_radius is None:
            raise ValueError(
                "squared loss is not globally Lipschitz: supply squared_radius "
                "(iterate-ball radius) or use the hinge loss"
            )
        # on a ball ||w|| <= r: |1 - <w,D>| <= 1 + r||D||, ||grad|| <= 2(1+r||D||)||D||
        d_max = 2.0 * ds.max_row_norm()
        G = 2.0 * (1.0 + squared_radius * d_max) * d_max
    gammas = realized_step_sizes(ds, config)
    bound = stability_generalization_bound(G, ds.n, gammas) / 2.0
    return measured, bound
