"""Command-line front end.

Subcommands: train, bench, variance, stability, gen-synth, auc.
Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .data import generate_synthetic, load_libsvm, serialize
from .harness import (
    ExperimentConfig,
    SynthSpec,
    cmd_bench,
    cmd_stability,
    cmd_train,
    cmd_variance,
)
from .metrics import TiesPolicy, auc_rank
from .optimizer import (
    ConstantStep,
    FixedInner,
    LinearInner,
    PerStageStep,
    PowerLawInner,
    TrainConfig,
)
from .pairloss import Normalization, PairLossKind
from .prox import Regularizer
from .sampling import DistKind


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # config errors exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="LIBSVM file (.gz/.bz2 ok)")
    p.add_argument("--synth", help="synthetic spec: n=..,d=..[,sep=..][,balance=..]")
    p.add_argument("--config", help="key=value file; explicit flags win")
    p.add_argument("--loss", choices=["squared", "hinge"])
    p.add_argument("--dist", choices=["opposite", "uniform"])
    p.add_argument("--normalization", choices=["opposite", "pairspace"])
    p.add_argument("--beta", type=float)
    p.add_argument("--m0", type=int)
    p.add_argument("--inner", help="linear | n43[:c] | fixed:T")
    p.add_argument("--gamma0", type=float)
    p.add_argument("--step-exponent", type=float, dest="step_exponent")
    p.add_argument("--constant-gamma", type=float, dest="constant_gamma")
    p.add_argument("--lambda2", type=float)
    p.add_argument("--lambda1", type=float)
    p.add_argument("--repeats", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--workers", type=int)
    p.add_argument("--stratify", action="store_const", const=True)
    p.add_argument("--grid", action="store_const", const=True)
    p.add_argument("--scale", action="store_const", const=True)
    p.add_argument("--subsample", type=int)
    p.add_argument("--train-fraction", type=float, dest="train_fraction")
    p.add_argument("--algorithm", choices=["adaptive", "plain"])
    p.add_argument("--clock", choices=["wall", "off"])
    p.add_argument("--boost", type=int, help="first-stage budget multiplier")


_DEFAULTS = dict(
    loss="squared", dist="opposite", normalization="opposite", beta=2.0, m0=64,
    inner="linear", gamma0=1.0, step_exponent=0.5, constant_gamma=None,
    lambda2=1e-4, lambda1=1e-4, repeats=25, seed=0, out=None, workers=1,
    stratify=False, grid=False, scale=False, subsample=None, train_fraction=0.8,
    algorithm="adaptive", clock="wall", boost=3, data=None, synth=None,
)


def _layer_options(args: argparse.Namespace) -> dict:
    """defaults < config file < explicit flags."""
    opts = dict(_DEFAULTS)
    if getattr(args, "config", None):
        for line_no, line in enumerate(open(args.config), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"config file line {line_no}: expected key=value")
            key, val = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in opts:
                raise ValueError(f"config file line {line_no}: unknown key {key!r}")
            opts[key] = _coerce(opts.get(key), val)
    for key in opts:
        cli_val = getattr(args, key, None)
        if cli_val is not None:
            opts[key] = cli_val
    return opts


def _coerce(default, text: str):
    if isinstance(default, bool):
        return text.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int) and not isinstance(default, bool):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text


def _parse_inner(spec: str):
    if spec == "linear":
        return LinearInner()
    if spec.startswith("n43"):
        c = float(spec.split(":", 1)[1]) if ":" in spec else 1.0
        return PowerLawInner(c)
    if spec.startswith("fixed:"):
        return FixedInner(int(spec.split(":", 1)[1]))
    raise ValueError(f"bad --inner spec {spec!r}")


def _parse_synth(spec: str) -> SynthSpec:
    kw = {}
    for part in spec.split(","):
        if not part:
            continue
        key, val = part.split("=", 1)
        key = {"sep": "separation", "balance": "class_balance"}.get(key, key)
        kw[key] = int(val) if key in ("n", "d") else float(val)
    return SynthSpec(**kw)


def build_experiment_config(opts: dict) -> ExperimentConfig:
    if opts["constant_gamma"] is not None:
        step = ConstantStep(opts["constant_gamma"])
    else:
        step = PerStageStep(opts["gamma0"], opts["step_exponent"])
    train = TrainConfig(
        loss=PairLossKind.SQUARED if opts["loss"] == "squared" else PairLossKind.HINGE,
        reg=Regularizer(opts["lambda2"], opts["lambda1"]),
        dist=DistKind.OPPOSITE_ONLY if opts["dist"] == "opposite" else DistKind.UNIFORM_PAIRS,
        normalization=(
            Normalization.OPPOSITE_SPACE if opts["normalization"] == "opposite"
            else Normalization.PAIR_SPACE
        ),
        step=step,
        inner=_parse_inner(opts["inner"]),
        beta=opts["beta"],
        m0=opts["m0"],
        seed=opts["seed"],
        stratify=opts["stratify"],
        first_stage_boost=opts["boost"],
    )
    return ExperimentConfig(
        data_path=opts["data"],
        synth=_parse_synth(opts["synth"]) if opts["synth"] else None,
        train=train,
        algorithm=opts["algorithm"],
        train_fraction=opts["train_fraction"],
        repeats=opts["repeats"],
        base_seed=opts["seed"],
        out=opts["out"],
        workers=opts["workers"],
        grid=opts["grid"],
        scale=opts["scale"],
        subsample_n=opts["subsample"],
        wall_clock=opts["clock"] == "wall",
    )


def make_parser() -> _Parser:
    parser = _Parser(prog="pairsgd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, desc in (
        ("train", "multi-seed train/test benchmark, CSV output"),
        ("bench", "adaptive vs plain at equal gradient budget, with traces"),
        ("variance", "gradient variance under both sampling laws"),
        ("stability", "replace-one stability over an n grid"),
    ):
        p = sub.add_parser(name, help=desc)
        _add_common(p)
        if name == "bench":
            p.add_argument("--algorithms", default="adaptive,plain")
        if name == "variance":
            p.add_argument("--probes", type=int, default=5)
            p.add_argument("--mc", action="store_true")
            p.add_argument("--mc-draws", type=int, default=100_000, dest="mc_draws")
        if name == "stability":
            p.add_argument("--n-grid", default="100,200,400", dest="n_grid")
            p.add_argument("--probe-pairs", type=int, default=20, dest="probe_pairs")

    g = sub.add_parser("gen-synth", help="write a synthetic LIBSVM dataset")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--d", type=int, required=True)
    g.add_argument("--separation", type=float, default=2.0)
    g.add_argument("--balance", type=float, default=0.5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    a = sub.add_parser("auc", help="AUC of a weight vector on a dataset")
    a.add_argument("--data", required=True)
    a.add_argument("--model", required=True, help="text file, one weight per line")
    a.add_argument("--ties", choices=["half", "strict"], default="half")
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "gen-synth":
            runner = _run_gen_synth
        elif args.command == "auc":
            runner = _run_auc
        else:
            opts = _layer_options(args)
            cfg = build_experiment_config(opts)
            runner = None
    except (ValueError, TypeError, OSError) as exc:
        print(f"pairsgd: config error: {exc}", file=sys.stderr)
        return 1
    try:
        if runner is not None:
            return runner(args)
        if args.command == "train":
            rows, summary = cmd_train(cfg)
            for r in summary:
                print(r.csv())
        elif args.command == "bench":
            cmd_bench(cfg, [a.strip() for a in args.algorithms.split(",") if a.strip()])
        elif args.command == "variance":
            rows = cmd_variance(cfg, args.probes, args.mc, args.mc_draws)
            for row in rows:
                print(",".join(str(v) for v in row))
        elif args.command == "stability":
            grid = [int(v) for v in args.n_grid.split(",")]
            for row in cmd_stability(cfg, grid, args.probe_pairs):
                print(",".join(str(v) for v in row))
        return 0
    except Exception as exc:
        print(f"pairsgd: runtime failure: {exc}", file=sys.stderr)
        return 2


def _run_gen_synth(args) -> int:
    ds = generate_synthetic(args.n, args.d, args.separation, args.balance, args.seed)
    with open(args.out, "w") as f:
        f.write(serialize(ds))
    print(f"wrote {ds.n} rows, dim {ds.dim} -> {args.out}")
    return 0


def _run_auc(args) -> int:
    ds = load_libsvm(args.data)
    w = np.loadtxt(args.model, ndmin=1)
    if w.size < ds.dim:
        w = np.pad(w, (0, ds.dim - w.size))
    s = np.asarray(ds.matrix() @ w[: ds.dim]).ravel()
    ties = TiesPolicy.HALF if args.ties == "half" else TiesPolicy.STRICT
    print(repr(auc_rank(s, ds.labels, ties)))
    return 0


if __name__ == "__main__":
    sys.exit(main())
