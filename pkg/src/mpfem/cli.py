"""Command-line entry point: ``mpfem {run,sweep,oracle-check,assemble-only}``."""
import argparse
import os
import sys

from .assembly import assemble, save_system
from .errors import ConfigError
from .harness import (ExperimentConfig, convergence_sweep, run_experiment, run_oracle_check,
                      sweep_schedule)


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH", help="key = value config file")
    common.add_argument("--out", default="runs", metavar="DIR", help="output directory")
    common.add_argument("--seed", type=int, default=None, metavar="N")
    common.add_argument("--threads", type=int, default=None, metavar="N")
    common.add_argument("--override", action="append", default=[], metavar="key=value",
                        help="override one config key (repeatable)")
    parser = argparse.ArgumentParser(prog="mpfem", description="Max-plus finite element method")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="assemble and propagate, then report errors")
    sub.add_parser("sweep", parents=[common], help="convergence sweep over (delta, dx)")
    sub.add_parser("oracle-check", parents=[common], help="certify the oracle by dense DP")
    sub.add_parser("assemble-only", parents=[common], help="write the A and B matrices")
    return parser


def _config(args):
    cfg = ExperimentConfig.from_file(args.config, args.override)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.threads is not None:
        changes["threads"] = args.threads
    return cfg.replace(**changes) if changes else cfg


def main(argv=None):
    args = _parser().parse_args(argv)
    log = lambda msg: print(msg, file=sys.stderr)
    try:
        cfg = _config(args)
        os.makedirs(args.out, exist_ok=True)
        if args.command == "run":
            rep = run_experiment(cfg, args.out, log=log)
            print(f"sup_error {rep.sup_error:.6g}")
            print(f"restricted_sup_error {rep.restricted_sup_error:.6g}")
        elif args.command == "sweep":
            res = convergence_sweep(cfg, sweep_schedule(cfg), args.out, log=log)
            for d, dx, e, r in res.rows:
                print(f"delta {d:g} dx {dx:g} sup_error {e:.6g} restricted_sup_error {r:.6g}")
            print(f"slope {res.slope:.4f}")
        elif args.command == "oracle-check":
            res = run_oracle_check(cfg, args.out)
            print(f"oracle_vs_fine {res.oracle_vs_fine:.6g} budget {res.budget:.6g} "
                  f"{'pass' if res.passed else 'FAIL'}")
            return 0 if res.passed else 1
        else:
            problem = cfg.problem()
            primal, test = cfg.families(problem.X)
            system = assemble(problem, test, primal, cfg["delta"], cfg.optimizer(),
                              cfg.smoothness(problem), cfg.prune, cfg["variant"],
                              cfg["cache"] or None, cfg["chunk"], cfg["threads"])
            save_system(args.out, system)
            print(f"wrote {system.A.shape[0]}x{system.A.shape[1]} matrices to {args.out}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
