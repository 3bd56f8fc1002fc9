"""Experiment harness: multi-seed benchmark runs, variance and stability
experiments, timing, and deterministic CSV emission.

Parallelism is across seeds only; results are collected and sorted before
writing so output files are identical for any worker count.
"""

from __future__ import annotations

import concurrent.futures
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .data import (
    ClassEmptyError,
    Dataset,
    SplitSpec,
    binarize,
    generate_synthetic,
    load_libsvm,
    scale_max_abs,
    split,
    subsample,
)
from .metrics import auc_rank, mean_stderr
from .optimizer import (
    FixedInner,
    TrainConfig,
    equal_budget_fixed_iters,
    train_adaptive,
    train_plain,
)
from .pairloss import PairLossKind, scores
from .prox import Regularizer
from .rng import SeedStream
from .sampling import DistKind, PairDistribution, variance_exact, variance_mc
from .theory import stability_probe

CSV_HEADER = "dataset,algorithm,seed,auc,objective,seconds,grad_evals,stages"

GRID_VALUES = (1e-5, 1e-4, 1e-3, 1e-2, 1e-1)


@dataclass(frozen=True)
class SynthSpec:
    n: int = 1000
    d: int = 20
    separation: float = 2.0
    class_balance: float = 0.5


@dataclass
class ExperimentConfig:
    """Everything one harness command needs; flags map onto these fields."""

    data_path: str | None = None
    synth: SynthSpec | None = None
    dataset_name: str | None = None
    train: TrainConfig = field(default_factory=TrainConfig)
    algorithm: str = "adaptive"  # adaptive | plain
    train_fraction: float = 0.8
    repeats: int = 25
    base_seed: int = 0
    out: str | None = None
    workers: int = 1
    grid: bool = False
    scale: bool = False
    subsample_n: int | None = None
    wall_clock: bool = True

    def clock(self):
        return time.perf_counter if self.wall_clock else (lambda: 0.0)


@dataclass
class ResultRow:
    dataset: str
    algorithm: str
    seed: object
    auc: object
    objective: object
    seconds: object
    grad_evals: object
    stages: object

    def csv(self) -> str:
        return ",".join(_fmt_cell(v) for v in (
            self.dataset, self.algorithm, self.seed, self.auc,
            self.objective, self.seconds, self.grad_evals, self.stages,
        ))


def _fmt_cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def load_experiment_dataset(cfg: ExperimentConfig) -> tuple[Dataset, str]:
    """Resolve the dataset (file or synthetic), binarize, subsample, scale."""
    if cfg.data_path:
        ds = load_libsvm(cfg.data_path)
        raw = getattr(ds, "raw_labels", ds.labels)
        if np.unique(raw).size != 2:
            ds = Dataset(ds.rows, binarize(raw, cfg.base_seed), ds.dim)
        name = cfg.dataset_name or os.path.basename(cfg.data_path)
    elif cfg.synth:
        s = cfg.synth
        ds = generate_synthetic(s.n, s.d, s.separation, s.class_balance, cfg.base_seed)
        # no commas: the name lands in a CSV column
        name = cfg.dataset_name or f"synth(n={s.n} d={s.d} sep={s.separation})"
    else:
        raise ValueError("either a data path or a synthetic spec is required")
    if cfg.subsample_n:
        ds = subsample(ds, cfg.subsample_n, cfg.base_seed)
    if cfg.scale:
        ds = scale_max_abs(ds)
    return ds, name


def _split_with_retry(ds: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    # a side missing a class is re-seeded deterministically (offset by 10^4)
    for attempt in range(32):
        try:
            return split(ds, SplitSpec(fraction, seed + 10_000 * attempt))
        except ClassEmptyError:
            continue
    raise ClassEmptyError(f"no class-complete split found from seed {seed}")


def _fit_config(cfg: ExperimentConfig, train_n: int, seed: int) -> TrainConfig:
    tc = cfg.train
    m0 = min(tc.m0, train_n)
    return replace(tc, m0=max(2, m0), seed=seed)


def _train_one(cfg: ExperimentConfig, ds_train: Dataset, ds_test: Dataset, seed: int):
    tc = _fit_config(cfg, ds_train.n, seed)
    trainer = train_plain if cfg.algorithm == "plain" else train_adaptive
    model, trace = trainer(ds_train, tc, eval_ds=ds_test, clock=cfg.clock())
    return model, trace


def run_seed(cfg: ExperimentConfig, ds: Dataset, name: str, seed: int) -> ResultRow:
    train_ds, test_ds = _split_with_retry(ds, cfg.train_fraction, seed)
    model, trace = _train_one(cfg, train_ds, test_ds, seed)
    test_auc = auc_rank(scores(model.w, test_ds), test_ds.labels)
    last = trace.stages[-1]
    return ResultRow(
        dataset=name,
        algorithm=cfg.algorithm,
        seed=seed,
        auc=test_auc,
        objective=last.objective,
        seconds=trace.total_seconds,
        grad_evals=trace.grad_evals,
        stages=len(trace.stages),
    )


# module-level context so forked workers inherit the dataset without pickling
_POOL_CTX: dict = {}


def _pool_run_seed(seed: int):
    return _guarded_run_seed(_POOL_CTX["cfg"], _POOL_CTX["ds"], _POOL_CTX["name"], seed)


def _guarded_run_seed(cfg, ds, name, seed):
    try:
        return run_seed(cfg, ds, name, seed)
    except Exception as exc:  # turned into a failure marker row by the caller
        return (seed, f"{type(exc).__name__}: {exc}")


def _map_seeds(cfg: ExperimentConfig, ds: Dataset, name: str, seeds) -> list:
    if cfg.workers <= 1 or len(seeds) <= 1:
        results = [_guarded_run_seed(cfg, ds, name, s) for s in seeds]
    else:
        _POOL_CTX.update(cfg=cfg, ds=ds, name=name)
        try:
            with concurrent.futures.ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                results = list(pool.map(_pool_run_seed, seeds))
        finally:
            _POOL_CTX.clear()
    return sorted(results, key=lambda r: r.seed if isinstance(r, ResultRow) else r[0])


def select_regularization(cfg: ExperimentConfig, ds: Dataset) -> tuple[float, float]:
    """Grid-select (lambda2, lambda1) by validation AUC on a carve-out.

    Runs once on the base seed: the training split donates 10% as validation;
    ties and diverging combinations resolve deterministically.
    """
    train_ds, _ = _split_with_retry(ds, cfg.train_fraction, cfg.base_seed)
    inner_train, val = _split_with_retry(ds=train_ds, fraction=0.9, seed=cfg.base_seed)
    best = (-1.0, (GRID_VALUES[0], GRID_VALUES[0]))
    for lam2 in GRID_VALUES:
        for lam1 in GRID_VALUES:
            tc = _fit_config(cfg, inner_train.n, cfg.base_seed)
            tc = replace(tc, reg=replace(tc.reg, lambda2=lam2, lambda1=lam1))
            trainer = train_plain if cfg.algorithm == "plain" else train_adaptive
            try:
                model, _ = trainer(inner_train, tc, clock=lambda: 0.0)
            except (FloatingPointError, RuntimeError):
                continue
            auc = auc_rank(scores(model.w, val), val.labels)
            if auc > best[0]:
                best = (auc, (lam2, lam1))
    return best[1]


def cmd_train(cfg: ExperimentConfig) -> tuple[list[ResultRow], list[ResultRow]]:
    """Multi-seed train/evaluate; returns (per-seed rows, summary rows).

    If a seed fails, the completed rows are still flushed to cfg.out along
    with one failure marker row per failed seed, and the error is re-raised.
    """
    ds, name = load_experiment_dataset(cfg)
    if cfg.grid:
        lam2, lam1 = select_regularization(cfg, ds)
        cfg = replace(
            cfg, train=replace(cfg.train, reg=Regularizer(lam2, lam1))
        )
    seeds = [cfg.base_seed + k for k in range(cfg.repeats)]
    results = _map_seeds(cfg, ds, name, seeds)
    rows = [r for r in results if isinstance(r, ResultRow)]
    failures = [r for r in results if not isinstance(r, ResultRow)]
    if failures:
        markers = [
            ResultRow(name, cfg.algorithm, seed, "NA", "NA", "NA", "NA",
                      "failed: " + msg.replace(",", ";"))
            for seed, msg in failures
        ]
        if cfg.out:
            write_csv(cfg.out, rows + markers)
        raise RuntimeError(
            f"{len(failures)} of {len(seeds)} seeds failed; first: seed "
            f"{failures[0][0]}: {failures[0][1]}"
        )
    summary = summarize(rows)
    if cfg.out:
        write_csv(cfg.out, rows + summary)
    return rows, summary


def summarize(rows: list[ResultRow]) -> list[ResultRow]:
    if not rows:
        return []
    first = rows[0]
    aucs = [r.auc for r in rows]
    objs = [r.objective for r in rows]
    secs = [r.seconds for r in rows]
    ges = [r.grad_evals for r in rows]

    def agg(vals):
        if len(vals) >= 2:
            return mean_stderr(vals)
        return float(vals[0]), "NA"

    mean_row = ResultRow(first.dataset, f"{first.algorithm}:mean", "summary",
                         agg(aucs)[0], agg(objs)[0], float(np.sum(secs)),
                         int(np.sum(ges)), len(rows))
    se_row = ResultRow(first.dataset, f"{first.algorithm}:stderr", "summary",
                       agg(aucs)[1], agg(objs)[1], 0.0, 0, len(rows))
    return [mean_row, se_row]


def write_csv(path: str, rows: list[ResultRow], header: str = CSV_HEADER) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="\n") as f:
        f.write(header + "\n")
        for r in rows:
            f.write(r.csv() + "\n")


def write_table(path: str, header: str, rows: list[tuple]) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="\n") as f:
        f.write(header + "\n")
        for row in rows:
            f.write(",".join(_fmt_cell(v) for v in row) + "\n")


def cmd_variance(
    cfg: ExperimentConfig,
    num_probes: int = 5,
    use_mc: bool = False,
    mc_draws: int = 100_000,
) -> list[tuple]:
    """Exact (or MC) gradient variance under both sampling laws, per model probe.

    Probes are the zero model plus seeded Gaussian models; the comparison runs
    under the full ordered-pair-space normalization, where both estimators
    target the same gradient.
    """
    from .pairloss import Normalization

    ds, _ = load_experiment_dataset(cfg)
    ds.require_both_classes()
    gen = SeedStream(cfg.base_seed).generator("variance-probes")
    models = [np.zeros(ds.dim)] + [gen.standard_normal(ds.dim) for _ in range(num_probes)]
    uniform = PairDistribution.for_dataset(DistKind.UNIFORM_PAIRS, ds)
    opposite = PairDistribution.for_dataset(DistKind.OPPOSITE_ONLY, ds)
    target = Normalization.PAIR_SPACE
    rows = []
    for pid, w in enumerate(models):
        if use_mc:
            vu, su = variance_mc(cfg.train.loss, w, uniform, ds, mc_draws,
                                 cfg.base_seed + pid, target)
            vo, so = variance_mc(cfg.train.loss, w, opposite, ds, mc_draws,
                                 cfg.base_seed + pid, target)
            rows.append((pid, vu, vo, su, so))
        else:
            vu = variance_exact(cfg.train.loss, w, uniform, ds, target)
            vo = variance_exact(cfg.train.loss, w, opposite, ds, target)
            rows.append((pid, vu, vo))
    if cfg.out:
        header = "probe,var_uniform,var_opposite" + (",stderr_uniform,stderr_opposite" if use_mc else "")
        write_table(cfg.out, header, rows)
    return rows


def cmd_stability(
    cfg: ExperimentConfig,
    n_grid: list[int],
    probe_pairs: int = 20,
) -> list[tuple]:
    """Replace-one stability over an n grid; hinge loss only.

    Emits (n, measured mean, analytic bound); the bound is reported, not
    asserted.
    """
    if cfg.train.loss is not PairLossKind.HINGE:
        raise ValueError("stability experiments require the hinge loss "
                         "(the squared pair loss is not globally Lipschitz)")
    base = cfg.synth or SynthSpec()
    rows = []
    for n in n_grid:
        measured_vals = []
        bound_vals = []
        for k in range(cfg.repeats):
            seed = cfg.base_seed + k
            ds = generate_synthetic(n, base.d, base.separation, base.class_balance, seed)
            fresh = generate_synthetic(
                2 * probe_pairs + 2, base.d, base.separation, base.class_balance,
                seed + 7_777,
            )
            gen = SeedStream(seed).generator("stability-probe")
            replace_index = int(gen.integers(0, n))
            replacement = (fresh.rows[0], int(fresh.labels[0]))
            pos = [fresh.rows[i] for i in fresh.pos_idx]
            neg = [fresh.rows[i] for i in fresh.neg_idx]
            probe_points = [(p, q) for p, q in zip(pos[1:], neg[1:])][:probe_pairs]
            tc = _fit_config(cfg, n, seed)
            measured, bound = stability_probe(ds, tc, replace_index, replacement, probe_points)
            measured_vals.append(measured)
            bound_vals.append(bound)
        rows.append((n, float(np.mean(measured_vals)), float(np.mean(bound_vals))))
    if cfg.out:
        write_table(cfg.out, "n,measured_mean,bound", rows)
    return rows


def cmd_bench(cfg: ExperimentConfig, algorithms: list[str]) -> dict[str, list]:
    """Adaptive vs plain at equal gradient budget, with stage-boundary traces.

    Writes one summary CSV plus a trace file per algorithm under cfg.out
    (a directory).
    """
    ds, name = load_experiment_dataset(cfg)
    seeds = [cfg.base_seed + k for k in range(cfg.repeats)]
    all_rows: list[ResultRow] = []
    traces: dict[str, list[tuple]] = {}
    for algorithm in algorithms:
        acfg = replace(cfg, algorithm=algorithm)
        if algorithm == "plain":
            # give the baseline exactly the adaptive run's pair-gradient budget
            probe_train, _ = _split_with_retry(ds, cfg.train_fraction, cfg.base_seed)
            budget = equal_budget_fixed_iters(probe_train, _fit_config(cfg, probe_train.n, cfg.base_seed))
            acfg = replace(acfg, train=replace(acfg.train, inner=FixedInner(budget)))
        rows = []
        trace_rows = []
        for seed in seeds:
            train_ds, test_ds = _split_with_retry(ds, cfg.train_fraction, seed)
            model, trace = _train_one(acfg, train_ds, test_ds, seed)
            test_auc = auc_rank(scores(model.w, test_ds), test_ds.labels)
            last = trace.stages[-1]
            rows.append(ResultRow(name, algorithm, seed, test_auc, last.objective,
                                  trace.total_seconds, trace.grad_evals, len(trace.stages)))
            cum_ge = 0
            cum_sec = 0.0
            for st in trace.stages:
                cum_ge += st.iters
                cum_sec += st.seconds
                trace_rows.append((name, algorithm, seed, st.stage, st.m, st.iters,
                                   st.gamma, cum_ge, cum_sec, st.objective, st.test_auc))
        all_rows.extend(rows + summarize(rows))
        traces[algorithm] = trace_rows
    if cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
        write_csv(os.path.join(cfg.out, "bench_summary.csv"), all_rows)
        for algorithm, trows in traces.items():
            write_table(
                os.path.join(cfg.out, f"trace_{algorithm}.csv"),
                "dataset,algorithm,seed,stage,m,iters,gamma,cum_grad_evals,cum_seconds,objective,test_auc",
                trows,
            )
    return {"rows": all_rows, "traces": traces}
