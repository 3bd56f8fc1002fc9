import math

import pytest

from pairsgd.data import generate_synthetic
from pairsgd.optimizer import ConstantStep, PerStageStep, TrainConfig
from pairsgd.pairloss import PairLossKind
from pairsgd.prox import Regularizer
from pairsgd.theory import (
    convergence_bound,
    hinge_lipschitz_bound,
    inner_iteration_objective,
    optimal_inner_iters,
    realized_step_sizes,
    stability_generalization_bound,
    stability_generalization_bound_const,
    stability_probe,
    statistical_accuracy,
    warm_start_bound,
)


class TestStatisticalAccuracy:
    def test_m_one(self):
        assert statistical_accuracy(1, 0.5) == 1.0

    def test_hand_value(self):
        assert statistical_accuracy(400, 0.5) == pytest.approx(0.05, abs=1e-15)

    def test_alpha_zero(self):
        for m in (1, 10, 10_000):
            assert statistical_accuracy(m, 0.0) == 1.0

    def test_preconditions(self):
        with pytest.raises(ValueError):
            statistical_accuracy(0, 0.5)
        with pytest.raises(ValueError):
            statistical_accuracy(10, 0.7)


class TestWarmStartBound:
    def test_full_subset_gives_delta(self):
        assert warm_start_bound(0.123, 500, 500, 0.5) == 0.123

    def test_hand_value(self):
        got = warm_start_bound(0.04472, 500, 1000, 0.5)
        assert got == pytest.approx(0.04472 + 2 * 0.5 * 500**-0.5, rel=1e-15)
        assert got == pytest.approx(0.08944, abs=5e-6)

    def test_alpha_zero_half_subset(self):
        assert warm_start_bound(0.0, 500, 1000, 0.0) == 1.0

    def test_monotone_decreasing_in_m(self):
        vals = [warm_start_bound(0.01, m, 1000, 0.5) for m in (100, 250, 500, 1000)]
        assert all(a > b for a, b in zip(vals, vals[1:]))


class TestStabilityBound:
    def test_hand_value(self):
        got = stability_generalization_bound(1.0, 10, [0.1] * 100)
        assert got == pytest.approx(4.0 / 90.0, rel=1e-12)

    def test_zero_steps(self):
        assert stability_generalization_bound(2.0, 5, [0.0] * 7) == 0.0

    def test_constant_shortcut_matches_general(self, rng):
        for _ in range(50):
            g = float(rng.uniform(0.1, 3))
            n = int(rng.integers(2, 50))
            gamma = float(rng.uniform(0.001, 1))
            T = int(rng.integers(1, 200))
            a = stability_generalization_bound(g, n, [gamma] * T)
            b = stability_generalization_bound_const(g, n, gamma, T)
            assert a == pytest.approx(b, rel=1e-12)

    def test_decreasing_in_n(self):
        vals = [stability_generalization_bound(1.0, n, [0.1] * 50) for n in (5, 10, 40, 100)]
        assert all(a > b for a, b in zip(vals, vals[1:]))


class TestOptimalInnerIters:
    def test_hand_value(self):
        assert optimal_inner_iters(1.0, 1.0, 1.0, 10) == 13

    def test_equal_constants(self):
        # G chosen so A = B: ceil(2^(2/3)) = 2
        g = math.sqrt(1.5)
        assert optimal_inner_iters(g, 1.0, 1.0, 3) == 2

    def test_grid_search_agreement_on_worked_examples(self):
        for (g, mu, gamma, n) in ((1.0, 1.0, 1.0, 10), (math.sqrt(1.5), 1.0, 1.0, 3)):
            t_star = optimal_inner_iters(g, mu, gamma, n)
            grid = range(1, 10 * t_star + 1)
            best = min(grid, key=lambda T: inner_iteration_objective(T, g, mu, gamma, n))
            assert t_star == best

    def test_near_optimal_everywhere(self, rng):
        # the ceil formula sits within one grid step of the integer argmin
        for _ in range(50):
            g = float(rng.uniform(0.2, 3))
            mu = float(rng.uniform(0.05, 2))
            gamma = float(rng.uniform(0.01, 1))
            n = int(rng.integers(3, 300))
            t_star = optimal_inner_iters(g, mu, gamma, n)
            best = min(range(1, 10 * t_star + 1),
                       key=lambda T: inner_iteration_objective(T, g, mu, gamma, n))
            assert abs(t_star - best) <= 1

    def test_doubling_n_scaling(self):
        a = optimal_inner_iters(1.0, 1.0, 0.1, 1000)
        b = optimal_inner_iters(1.0, 1.0, 0.1, 2000)
        assert b / a == pytest.approx(2 ** (4.0 / 3.0), rel=0.05)


class TestConvergenceBound:
    def test_hand_value(self):
        assert convergence_bound(1.0, 0.1, 1.0, 1.0, 10) == pytest.approx(1.1, rel=1e-15)

    def test_doubling_t_halves_without_noise(self):
        a = convergence_bound(2.0, 0.1, 0.5, 0.0, 10)
        b = convergence_bound(2.0, 0.1, 0.5, 0.0, 20)
        assert b == pytest.approx(a / 2, rel=1e-12)

    def test_zero_gap_leaves_floor(self):
        assert convergence_bound(0.0, 0.2, 1.0, 3.0, 7) == pytest.approx(0.6, rel=1e-15)

    def test_decreasing_in_t(self):
        vals = [convergence_bound(1.0, 0.1, 1.0, 0.5, T) for T in (1, 5, 25, 125)]
        assert all(a > b for a, b in zip(vals, vals[1:]))


class TestStabilityProbe:
    def _config(self, n):
        return TrainConfig(
            loss=PairLossKind.HINGE,
            reg=Regularizer(1e-3, 0.0),
            m0=min(32, n),
            step=PerStageStep(0.5, 0.5),
            seed=3,
        )

    def test_identical_replacement_measures_zero(self):
        ds = generate_synthetic(60, 4, 2.0, 0.5, seed=5)
        probe_src = generate_synthetic(10, 4, 2.0, 0.5, seed=6)
        pairs = [(probe_src.rows[i], probe_src.rows[j])
                 for i in probe_src.pos_idx[:3] for j in probe_src.neg_idx[:3]]
        idx = 7
        measured, bound = stability_probe(
            ds, self._config(60), idx, (ds.rows[idx], int(ds.labels[idx])), pairs
        )
        assert measured == 0.0
        assert bound > 0.0

    def test_bound_matches_recomputation(self):
        ds = generate_synthetic(50, 4, 2.0, 0.5, seed=8)
        cfg = self._config(50)
        probe_src = generate_synthetic(6, 4, 2.0, 0.5, seed=9)
        pairs = [(probe_src.rows[probe_src.pos_idx[0]], probe_src.rows[probe_src.neg_idx[0]])]
        _, bound = stability_probe(ds, cfg, 0, (probe_src.rows[0], 1), pairs)
        expect = stability_generalization_bound(
            hinge_lipschitz_bound(ds), ds.n, realized_step_sizes(ds, cfg)
        ) / 2.0
        assert bound == expect

    def test_squared_loss_requires_radius(self):
        ds = generate_synthetic(30, 3, 2.0, 0.5, seed=2)
        cfg = TrainConfig(loss=PairLossKind.SQUARED, m0=10, step=ConstantStep(0.01))
        with pytest.raises(ValueError, match="radius"):
            stability_probe(ds, cfg, 0, (ds.rows[1], 1), [])

    def test_nonidentical_replacement_moves_model(self):
        from pairsgd.data import SparseVector
        from pairsgd.optimizer import FixedInner

        ds = generate_synthetic(20, 4, 2.0, 0.5, seed=5)
        fresh = generate_synthetic(10, 4, 2.0, 0.5, seed=99)
        pairs = [(fresh.rows[i], fresh.rows[j])
                 for i in fresh.pos_idx[:2] for j in fresh.neg_idx[:2]]
        # single stage with enough draws that the replaced row is sampled;
        # the replacement is extreme so any hit shifts the model
        cfg = TrainConfig(loss=PairLossKind.HINGE, reg=Regularizer(1e-3, 0.0),
                          m0=20, inner=FixedInner(500), step=ConstantStep(0.02), seed=3)
        spike = SparseVector.from_pairs([0, 1, 2, 3], [9.0, -9.0, 9.0, -9.0], 4)
        measured, _ = stability_probe(ds, cfg, 0, (spike, 1), pairs)
        assert measured > 0.0
