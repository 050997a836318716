"""Command-line entry point: ``run``, ``sweep`` and ``theory``."""

from __future__ import annotations

import argparse
import logging
import math
import sys

from .errors import ContractViolation
from .experiment import load_config, run_experiment, sweep
from .federation import ALGORITHMS
from .theory import theorem_eta, validate_theorem_conditions

log = logging.getLogger("equitable_fl")


def _algos(value: str | None, default):
    if value is None:
        return default
    if value == "all":
        return ALGORITHMS
    names = tuple(v.strip() for v in value.split(",") if v.strip())
    for name in names:
        if name not in ALGORITHMS:
            raise ContractViolation(f"unknown algorithm {name!r}; choose from {', '.join(ALGORITHMS)}")
    return names


def _overrides(args) -> dict:
    kw = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.out is not None:
        kw["output_dir"] = args.out
    if args.workers is not None:
        kw["workers"] = args.workers
    return kw


def cmd_run(args) -> int:
    cfg = load_config(args.config).with_overrides(**_overrides(args))
    algos = _algos(args.algo, (cfg.hp.algorithm,))
    if len(algos) > 1:
        results = sweep(cfg, [cfg.seed], algos)
        for algo, runs in results.items():
            _report(algo, runs[0])
        return 0
    summary = run_experiment(cfg.with_overrides(algorithm=algos[0]))
    _report(algos[0], summary)
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config).with_overrides(**_overrides(args))
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    results = sweep(cfg, seeds, _algos(args.algo, ALGORITHMS))
    for algo, runs in results.items():
        for s in runs:
            _report(algo, s)
    return 0


def _report(algo, s) -> None:
    nmi = "" if math.isnan(s.mean_nmi) else f" nmi={s.mean_nmi:.4f}"
    where = f" -> {s.csv_path}" if s.csv_path else ""
    print(f"{algo:13s} seed={s.config['seed']} acc={s.final_accuracy:.4f} "
          f"cd={s.mean_cd_final:.4f} sigma_acc={s.mean_sigma_acc_final:.4f}"
          f"{nmi} ({s.runtime:.1f}s){where}")


def cmd_theory(args) -> int:
    eta = args.eta if args.eta is not None else theorem_eta(args.epochs, args.rounds,
                                                           args.lsmooth)
    report = validate_theorem_conditions(eta, args.mu, args.epochs, args.rounds,
                                         args.lsmooth)
    print(f"eta       = {eta:.9g}")
    print(report.format())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="equitable-fl", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--algo", help=f"one of {', '.join(ALGORITHMS)}, or 'all'")
    run.add_argument("--out")
    run.add_argument("--workers", type=int)
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="all algorithms over several seeds")
    sw.add_argument("--config", required=True)
    sw.add_argument("--seeds", required=True, help="comma-separated, e.g. 0,1,2")
    sw.add_argument("--algo")
    sw.add_argument("--seed", type=int, help=argparse.SUPPRESS)
    sw.add_argument("--out")
    sw.add_argument("--workers", type=int)
    sw.set_defaults(func=cmd_sweep)

    th = sub.add_parser("theory", help="check convergence-theorem conditions")
    th.add_argument("--eta", type=float, help="defaults to 1/(4E sqrt(3LK))")
    th.add_argument("--mu", type=float, default=0.0)
    th.add_argument("--epochs", type=int, required=True)
    th.add_argument("--rounds", type=int, required=True)
    th.add_argument("--lsmooth", type=float, required=True)
    th.set_defaults(func=cmd_theory)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except ContractViolation as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
