import math

import numpy as np
import pytest

from pairsgd.data import Dataset, SparseVector, generate_synthetic, split, SplitSpec, stage_permutation
from pairsgd.metrics import auc_bruteforce, auc_rank
from pairsgd.optimizer import (
    ConstantStep,
    DivergenceError,
    FixedInner,
    PerStageStep,
    PowerLawInner,
    TrainConfig,
    inner_dsgd,
    reference_minimizer,
    stage_sizes,
    train_adaptive,
    train_plain,
)
from pairsgd.pairloss import Normalization, PairLossKind, objective_fast, scores
from pairsgd.prox import Regularizer
from pairsgd.rng import SeedStream
from pairsgd.theory import warm_start_bound

from conftest import dense_reference_dsgd, random_sparse_dataset, stable_gamma


def sv(dense):
    dense = np.asarray(dense, dtype=float)
    return SparseVector.from_pairs(np.flatnonzero(dense), dense[dense != 0.0], dense.size)


class TestStageSizes:
    def test_doubling_chain(self):
        assert stage_sizes(1000, 100, 2.0) == [100, 200, 400, 800, 1000]

    def test_single_stage(self):
        assert stage_sizes(64, 64, 2.0) == [64]

    def test_big_growth(self):
        assert stage_sizes(1000, 100, 10.0) == [100, 1000]

    def test_fp_guard(self):
        # 1.1 * 10 is 11.000000000000002 in floating point; ceil must give 11
        assert stage_sizes(100, 10, 1.1)[1] == 11

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            stage_sizes(10, 20, 2.0)
        with pytest.raises(ValueError):
            stage_sizes(10, 2, 1.0)

    def test_strictly_increasing_to_n(self, rng):
        for _ in range(50):
            n = int(rng.integers(3, 5000))
            m0 = int(rng.integers(2, n + 1))
            beta = float(rng.uniform(1.1, 5.0))
            sizes = stage_sizes(n, m0, beta)
            assert sizes[0] == m0 and sizes[-1] == n
            assert all(a < b for a, b in zip(sizes, sizes[1:]))


class TestInnerLoop:
    def test_zero_iterations_rejected(self, rng):
        ds = random_sparse_dataset(rng, 6, 3)
        cfg = TrainConfig()
        with pytest.raises(ValueError):
            inner_dsgd(np.zeros(3), ds, 0, 0.1, cfg, SeedStream(0).generator("inner", 1))

    def test_single_step_is_one_prox_step(self, rng):
        ds = random_sparse_dataset(rng, 8, 4)
        cfg = TrainConfig(reg=Regularizer(0.1, 0.05))
        gamma = stable_gamma(ds)
        w1 = inner_dsgd(np.zeros(4), ds, 1, gamma, cfg, SeedStream(3).generator("inner", 1))
        ref = dense_reference_dsgd(np.zeros(4), ds, 1, gamma, cfg, SeedStream(3).generator("inner", 1))
        np.testing.assert_array_equal(w1, ref)

    def test_large_l1_freezes_at_zero(self, rng):
        ds = random_sparse_dataset(rng, 10, 4)
        max_abs_delta = 2.0 * max(float(np.abs(r.values).max()) for r in ds.rows)
        # soft threshold kills every update: |gamma * g_c| <= gamma * 2 max|delta|
        lam1 = 2.0 * max_abs_delta + 1.0
        cfg = TrainConfig(reg=Regularizer(0.0, lam1))
        w = inner_dsgd(np.zeros(4), ds, 50, 0.05, cfg, SeedStream(1).generator("inner", 1))
        np.testing.assert_array_equal(w, np.zeros(4))

    def test_single_pair_geometric_convergence(self):
        # one positive, one negative: margin follows a scalar linear recursion
        xp, xn = sv([1.0, 0.5]), sv([-0.5, 0.0])
        ds = Dataset([xp, xn], [1, -1])
        delta = xp.to_dense() - xn.to_dense()
        d2 = float(np.dot(delta, delta))
        gamma = 0.4 / (2.0 * d2)
        rho = 1.0 - 2.0 * gamma * d2
        cfg = TrainConfig(reg=Regularizer(0.0, 0.0))
        for T in (5, 20, 60):
            w = inner_dsgd(np.zeros(2), ds, T, gamma, cfg, SeedStream(0).generator("inner", 1))
            margin = float(np.dot(w, delta))
            assert 1.0 - margin == pytest.approx(rho**T, rel=1e-9)

    def test_divergence_raises_with_iteration(self, rng):
        ds = random_sparse_dataset(rng, 10, 4, density=1.0)
        cfg = TrainConfig()
        with pytest.raises(DivergenceError) as err:
            inner_dsgd(np.zeros(4), ds, 5000, 50.0, cfg, SeedStream(0).generator("inner", 1))
        assert err.value.iteration >= 1
        assert "gamma" in str(err.value)

    def test_lazy_state_matches_dense_reference(self, rng):
        for trial in range(8):
            d = int(rng.integers(3, 25))
            ds = random_sparse_dataset(rng, int(rng.integers(6, 16)), d)
            gamma = stable_gamma(ds)
            reg = Regularizer(
                float(rng.choice([0.0, 1e-3, 0.1])), float(rng.choice([0.0, 1e-3, 0.05]))
            )
            kind = PairLossKind.SQUARED if trial % 2 == 0 else PairLossKind.HINGE
            cfg = TrainConfig(loss=kind, reg=reg, seed=trial)
            w_lazy = inner_dsgd(np.zeros(d), ds, 400, gamma, cfg, SeedStream(trial).generator("inner", 1))
            w_dense = dense_reference_dsgd(np.zeros(d), ds, 400, gamma, cfg, SeedStream(trial).generator("inner", 1))
            np.testing.assert_allclose(w_lazy, w_dense, rtol=1e-10, atol=1e-12)
            np.testing.assert_array_equal(w_lazy != 0.0, w_dense != 0.0)

    def test_uniform_distribution_same_label_draws_shrink_only(self, rng):
        from pairsgd.sampling import DistKind

        ds = random_sparse_dataset(rng, 10, 4)
        gamma = stable_gamma(ds)
        cfg = TrainConfig(dist=DistKind.UNIFORM_PAIRS, normalization=Normalization.PAIR_SPACE,
                          reg=Regularizer(0.01, 0.001), seed=4)
        w_lazy = inner_dsgd(np.zeros(4), ds, 300, gamma, cfg, SeedStream(4).generator("inner", 1))
        w_dense = dense_reference_dsgd(np.zeros(4), ds, 300, gamma, cfg, SeedStream(4).generator("inner", 1))
        np.testing.assert_allclose(w_lazy, w_dense, rtol=1e-10, atol=1e-12)


class TestTrainAdaptive:
    def test_single_stage_equals_inner_loop(self):
        ds = generate_synthetic(60, 5, 2.0, 0.5, seed=2)
        cfg = TrainConfig(m0=60, step=ConstantStep(0.01), seed=8)
        model, trace = train_adaptive(ds, cfg, clock=lambda: 0.0)
        assert len(trace.stages) == 1 and trace.stages[0].iters == 60
        perm = stage_permutation(ds, cfg.seed, cfg.stratify)
        stage_ds = ds.take(perm)
        w_ref = inner_dsgd(np.zeros(5), stage_ds, 60, 0.01, cfg, SeedStream(8).generator("inner", 1))
        np.testing.assert_array_equal(model.w, w_ref)

    def test_plain_equals_adaptive_full_start(self):
        ds = generate_synthetic(50, 4, 2.0, 0.5, seed=3)
        cfg = TrainConfig(m0=16, inner=FixedInner(120), step=ConstantStep(0.02), seed=5)
        from dataclasses import replace

        plain_model, plain_trace = train_plain(ds, cfg, clock=lambda: 0.0)
        full_model, full_trace = train_adaptive(ds, replace(cfg, m0=50), clock=lambda: 0.0)
        np.testing.assert_array_equal(plain_model.w, full_model.w)
        assert plain_trace.grad_evals == 120  # no boost on a single stage
        assert full_trace.grad_evals == 120

    def test_bitwise_determinism(self):
        ds = generate_synthetic(200, 8, 3.0, 0.4, seed=7)
        cfg = TrainConfig(m0=32, seed=11, reg=Regularizer(1e-3, 1e-4), step=PerStageStep(0.3, 0.5))
        a, ta = train_adaptive(ds, cfg, clock=lambda: 0.0)
        b, tb = train_adaptive(ds, cfg, clock=lambda: 0.0)
        assert np.array_equal(a.w, b.w)
        assert [(s.objective, s.m, s.iters) for s in ta.stages] == [
            (s.objective, s.m, s.iters) for s in tb.stages
        ]

    def test_separable_synthetic_reaches_high_auc(self):
        # separation 10 pushes row norms to ~8, so the step must sit below 1/L
        ds = generate_synthetic(200, 6, 10.0, 0.5, seed=1)
        train, test = split(ds, SplitSpec(0.8, seed=1))
        cfg = TrainConfig(m0=20, seed=1, reg=Regularizer(1e-4, 1e-5), step=PerStageStep(0.01, 0.5))
        model, _ = train_adaptive(train, cfg, clock=lambda: 0.0)
        auc = auc_bruteforce(scores(model.w, test), test.labels)
        assert auc >= 0.99

    def test_zero_separation_auc_near_half(self):
        ds = generate_synthetic(400, 6, 0.0, 0.5, seed=9)
        train, test = split(ds, SplitSpec(0.8, seed=9))
        cfg = TrainConfig(m0=40, seed=9, reg=Regularizer(1e-3, 1e-4), step=PerStageStep(0.05, 0.5))
        model, _ = train_adaptive(train, cfg, clock=lambda: 0.0)
        s = scores(model.w, test)
        observed = auc_rank(s, test.labels)
        # permutation null: same scores, label assignment shuffled
        gen = np.random.default_rng(123)
        null = []
        for _ in range(300):
            null.append(auc_rank(s, gen.permutation(test.labels)))
        sigma = float(np.std(null))
        assert abs(observed - 0.5) <= 3.0 * sigma + 1e-9

    def test_trace_accounting(self):
        ds = generate_synthetic(300, 5, 2.0, 0.5, seed=4)
        cfg = TrainConfig(m0=32, seed=4, step=ConstantStep(0.005))
        _, trace = train_adaptive(ds, cfg, clock=lambda: 0.0)
        sizes = stage_sizes(300, 32, 2.0)
        assert [s.m for s in trace.stages] == sizes
        expected = [m for m in sizes]
        expected[0] *= cfg.first_stage_boost
        assert [s.iters for s in trace.stages] == expected
        assert trace.grad_evals == sum(expected)

    def test_power_law_inner_schedule(self):
        ds = generate_synthetic(100, 4, 2.0, 0.5, seed=6)
        cfg = TrainConfig(m0=25, seed=6, inner=PowerLawInner(0.1), step=ConstantStep(0.005))
        _, trace = train_adaptive(ds, cfg, clock=lambda: 0.0)
        for rec in trace.stages:
            expect = max(1, math.ceil(0.1 * rec.m ** (4.0 / 3.0)))
            if rec.stage == 1 and len(trace.stages) > 1:
                expect *= cfg.first_stage_boost
            assert rec.iters == expect

    def test_sparsity_weakly_increasing_with_l1(self):
        ds = generate_synthetic(200, 20, 1.0, 0.5, seed=13)
        supports = []
        for lam1 in (1e-4, 3e-2, 2e-1):
            cfg = TrainConfig(m0=32, seed=13, reg=Regularizer(1e-3, lam1),
                              step=PerStageStep(0.05, 0.5))
            model, _ = train_adaptive(ds, cfg, clock=lambda: 0.0)
            supports.append(int(np.sum(model.w != 0.0)))
        assert supports[0] >= supports[1] >= supports[2]

    def test_warm_start_bound_on_strongly_convex_fixture(self):
        # strict check: stage-start suboptimality stays within the carried bound
        ds = generate_synthetic(256, 6, 2.0, 0.5, seed=21)
        reg = Regularizer(0.05, 0.0)
        cfg = TrainConfig(m0=32, seed=21, reg=reg, step=ConstantStep(0.004),
                          alpha=0.5)
        model, trace = train_adaptive(ds, cfg, clock=lambda: 0.0)
        sizes = [rec.m for rec in trace.stages]
        perm = stage_permutation(ds, cfg.seed, cfg.stratify)

        def stage_view(m):
            return ds.take(perm[:m])

        def exact_min(sub):
            g = 0.02
            return reference_minimizer(sub, reg, g, 40_000)

        # replay stage outputs by rerunning with truncated stage lists
        from pairsgd.optimizer import LazyShrinkState, _run_inner

        state = LazyShrinkState(np.zeros(ds.dim))
        stream = SeedStream(cfg.seed)
        prev_w = None
        prev_m = None
        for s, m in enumerate(sizes, start=1):
            sub = stage_view(m)
            if prev_w is not None:
                w_star = exact_min(sub)
                r_start = objective_fast(cfg.loss, prev_w, sub, reg)
                r_opt = objective_fast(cfg.loss, w_star, sub, reg)
                sub_prev = stage_view(prev_m)
                w_star_prev = exact_min(sub_prev)
                delta_prev = objective_fast(cfg.loss, prev_w, sub_prev, reg) - objective_fast(
                    cfg.loss, w_star_prev, sub_prev, reg
                )
                bound = warm_start_bound(delta_prev, prev_m, m, cfg.alpha)
                assert r_start - r_opt <= bound + 1e-9
            iters = m * (cfg.first_stage_boost if s == 1 and len(sizes) > 1 else 1)
            _run_inner(state, sub, iters, cfg.step.gamma_for(m), cfg, stream.generator("inner", s))
            prev_w = state.flush().copy()
            prev_m = m

    def test_more_iterations_reduce_suboptimality(self):
        ds = generate_synthetic(120, 5, 2.0, 0.5, seed=17)
        reg = Regularizer(0.05, 0.0)
        w_star = reference_minimizer(ds, reg, 0.02, 50_000)
        f_star = objective_fast(PairLossKind.SQUARED, w_star, ds, reg)
        gamma = 0.002
        cfg = TrainConfig(reg=reg)
        gaps = []
        for T in (100, 1600):
            vals = []
            for seed in range(25):
                w = inner_dsgd(np.zeros(5), ds, T, gamma, cfg, SeedStream(seed).generator("inner", 1))
                vals.append(objective_fast(PairLossKind.SQUARED, w, ds, reg) - f_star)
            gaps.append(float(np.mean(vals)))
        assert gaps[1] < gaps[0]


class TestReferenceMinimizer:
    def test_matches_closed_form_quadratic(self):
        # squared loss + ridge is a quadratic: solve the normal equations directly
        ds = generate_synthetic(40, 4, 1.5, 0.5, seed=2)
        reg = Regularizer(0.1, 0.0)
        w_ref = reference_minimizer(ds, reg, 0.02, 30_000)
        X = np.vstack([r.to_dense() for r in ds.rows])
        deltas = []
        for i in ds.pos_idx:
            for j in ds.neg_idx:
                deltas.append(X[i] - X[j])
        D = np.vstack(deltas)
        npairs = D.shape[0]
        H = 2.0 * D.T @ D / npairs + 2.0 * reg.lambda2 * np.eye(4)
        rhs = 2.0 * D.sum(axis=0) / npairs
        w_exact = np.linalg.solve(H, rhs)
        np.testing.assert_allclose(w_ref, w_exact, rtol=1e-8, atol=1e-10)
