"""Command-line entry points: run, sweep, gradcheck.

Exit codes: 0 success, 1 config error, 2 data error, 3 numerical failure,
4 gradcheck failure.
"""

from __future__ import annotations

import argparse
import sys

from .config import load_config
from .errors import (
    ConfigError,
    DataError,
    DimensionError,
    DomainError,
    InputError,
    NumericalError,
)
from .harness import run_experiment, run_gradcheck, run_sweep

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3
EXIT_GRADCHECK = 4


class _Parser(argparse.ArgumentParser):
    # usage errors are config errors (exit 1), not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)


def _float_list(text: str):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad float list '{text}'") from exc


def _int_list(text: str):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad int list '{text}'") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="funnelopt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one configured experiment")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None, help="override run.seeds")
    p_run.add_argument("--out", default=None, help="override out.dir")

    p_sweep = sub.add_parser("sweep", help="grid over (gamma_p, gamma_s) x seeds")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--gamma-p", type=_float_list, required=True)
    p_sweep.add_argument("--gamma-s", type=_float_list, required=True)
    p_sweep.add_argument("--seeds", type=_int_list, required=True)
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--jobs", type=int, default=1)

    p_check = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    p_check.add_argument("--draws", type=int, default=25)
    p_check.add_argument("--step", type=float, default=1e-6, help="difference step h")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = load_config(args.config)
            summary = run_experiment(cfg, seed=args.seed, out_dir=args.out)
            agg = summary["aggregate"]
            loss = agg["final_loss"]
            print(f"runs: {agg['n_seeds']}")
            if loss is not None:
                print(f"final loss: {loss['mean']:.6e} +/- {loss['std']:.3e}")
            if agg["final_top1"] is not None:
                top1 = agg["final_top1"]
                print(f"final top1: {top1['mean']:.4f} +/- {top1['std']:.4f}")
            return EXIT_OK
        if args.command == "sweep":
            cfg = load_config(args.config)
            cells = run_sweep(
                cfg, args.gamma_p, args.gamma_s, args.seeds,
                out_dir=args.out, jobs=args.jobs,
            )
            failed = [c for c in cells if c["error"]]
            print(f"sweep: {len(cells)} cells, {len(failed)} failed")
            return EXIT_OK
        return run_gradcheck(draws=args.draws, h=args.step)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, DimensionError, InputError, DomainError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
