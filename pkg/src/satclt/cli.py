"""Command line interface: ``satclt <command> [flags]``.

Exit codes: 0 success, 2 invalid configuration or input, 3 resource budget
exceeded.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .counting import DEFAULT_NODE_BUDGET, CountBudgetExceeded, UndefinedDistribution, count_models, marginal
from .dimacs import DimacsError, format_dimacs, read_dimacs
from .experiments import EXPERIMENTS, ConfigError, ExperimentConfig
from .formula import clause_count_for_density, sample_random_cnf
from .gw_tree import TreeSizeExceeded
from .rng import stream
from .ucp import prune

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BUDGET = 3

# flag name -> ExperimentConfig field
SHARED_FLAGS = {
    "d": float,
    "n": int,
    "trials": int,
    "seed": int,
    "t": float,
    "ell": int,
    "pop_size": int,
    "tol": float,
    "quad_k": int,
    "workers": int,
}


def _add_shared(p: argparse.ArgumentParser) -> None:
    for name, typ in SHARED_FLAGS.items():
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None)
    p.add_argument("--out", default=None, help="write the JSON report here instead of stdout")
    p.add_argument("--config", default=None, help="flat key = value file; flags override it")
    p.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="any other config key, e.g. --set ds=0.5,1.0 (repeatable)",
    )
    p.add_argument("--timing", action="store_true", help="include wall-clock runtime in the report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="satclt", description="Random 2-SAT model counting experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="sample a random 2-CNF in DIMACS format")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--d", type=float, default=None)
    g.add_argument("--m", type=int, default=None, help="clause count (overrides --d)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default=None)

    c = sub.add_parser("count", help="exact model count of a DIMACS file")
    c.add_argument("path")
    c.add_argument("--budget", type=int, default=DEFAULT_NODE_BUDGET)
    c.add_argument("--pruned", action="store_true", help="count the pruned formula instead")

    p = sub.add_parser("prune", help="write the pruned formula of a DIMACS file")
    p.add_argument("path")
    p.add_argument("--out", default=None)

    mg = sub.add_parser("marginal", help="exact marginal of one variable")
    mg.add_argument("path")
    mg.add_argument("--var", type=int, required=True)
    mg.add_argument("--budget", type=int, default=DEFAULT_NODE_BUDGET)

    for name in EXPERIMENTS:
        _add_shared(sub.add_parser(name, help=f"run the {name} experiment"))
    return parser


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.config is not None:
        cfg = ExperimentConfig.from_file(args.config, cfg)
    extra: dict[str, str] = {}
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        extra[k] = v
    if extra:
        cfg = ExperimentConfig.from_mapping(extra, cfg)
    flags = {k: getattr(args, k) for k in SHARED_FLAGS if getattr(args, k) is not None}
    if args.out is not None:
        flags["out"] = args.out
    if flags:
        cfg = ExperimentConfig.from_mapping(flags, cfg)
    return cfg


def _run(args: argparse.Namespace) -> int:
    cmd = args.command
    if cmd == "generate":
        if args.m is None and args.d is None:
            raise ConfigError("generate needs --d or --m")
        if args.n < 2:
            raise ConfigError("n must be at least 2")
        m = args.m if args.m is not None else clause_count_for_density(args.n, args.d)
        if m < 0:
            raise ConfigError("m must be non-negative")
        cnf = sample_random_cnf(args.n, m, stream(args.seed, "formula", 0))
        _write(format_dimacs(cnf, [f"random 2-CNF n={args.n} m={m} seed={args.seed}"]), args.out)
        return EXIT_OK
    if cmd == "count":
        cnf = read_dimacs(args.path)
        if args.pruned:
            cnf = prune(cnf).cnf
        mc = count_models(cnf, budget=args.budget)
        print(json.dumps({"count": str(mc.count), "log": mc.log_value if mc.sat else None, "sat": mc.sat, "nodes": mc.nodes}))
        return EXIT_OK
    if cmd == "prune":
        cnf = read_dimacs(args.path)
        hat = prune(cnf)
        comments = [f"pruned: removed {len(hat.removed)} of {cnf.m} clauses"]
        _write(format_dimacs(hat.cnf, comments), args.out)
        return EXIT_OK
    if cmd == "marginal":
        cnf = read_dimacs(args.path)
        if not 1 <= args.var <= cnf.n:
            raise ConfigError(f"--var must lie in 1..{cnf.n}")
        mg = marginal(cnf, args.var, budget=args.budget)
        print(json.dumps({"var": args.var, "p_true": mg.p_true, "true_count": str(mg.true_count), "total": str(mg.total)}))
        return EXIT_OK
    cfg = config_from_args(args)
    report = EXPERIMENTS[cmd](cfg)
    _write(report.to_json(include_runtime=args.timing), cfg.out)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except (ConfigError, DimacsError, UndefinedDistribution, OSError) as exc:
        print(f"satclt: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CountBudgetExceeded, TreeSizeExceeded) as exc:
        print(f"satclt: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
