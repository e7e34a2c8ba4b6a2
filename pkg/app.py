"""Command-line entry point for the Brinkman–Forchheimer simulator.

    python app.py run --config configs/taylor_green.ini --out runs/tg
    python app.py sweep --config configs/taylor_green.ini --mu 0.25,0.5 --beta 0.25,0.5,1 --r 3 --out sweep.csv
    python app.py check-inequalities --seed 0 --r 2,3,4,7 --fields 25
    python app.py rescale-test --lambda 2 --r 3
    python app.py energy-audit runs/tg
"""

import argparse
import logging
import sys
from typing import List, Optional, Sequence

from BrinkmanForchheimer.commands import (
    ExitCode,
    cmd_check_inequalities,
    cmd_energy_audit,
    cmd_rescale_test,
    cmd_run,
    cmd_sweep,
)
from BrinkmanForchheimer.config import RunConfig
from BrinkmanForchheimer.errors import (
    BlowUpError,
    CBFError,
    CheckpointError,
    ConfigError,
    InequalityViolation,
)

logger = logging.getLogger("app")


def _floats(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="app.py", description="3D periodic Brinkman–Forchheimer simulator")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="log per-step detail")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="only log warnings and errors")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="integrate one trajectory")
    run.add_argument("--config", required=True)
    run.add_argument("--out", required=True, help="output directory for ledger and checkpoints")
    run.add_argument("--resume", help="checkpoint to continue from")

    sweep = sub.add_parser("sweep", help="one trajectory per (mu, beta, r) cell")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--mu", type=_floats, required=True)
    sweep.add_argument("--beta", type=_floats, required=True)
    sweep.add_argument("--r", type=_floats, default=[3.0])
    sweep.add_argument("--out", required=True, help="summary CSV")
    sweep.add_argument("--workers", type=int, help="process count (default $CBF_WORKERS or 1)")

    check = sub.add_parser("check-inequalities", help="functional-inequality suite on random fields")
    check.add_argument("--seed", type=int, default=0)
    check.add_argument("--r", type=_floats, default=[2.0, 3.0, 4.0, 7.0])
    check.add_argument("--fields", type=int, default=25)

    rescale = sub.add_parser("rescale-test", help="parabolic rescaling identity of the right-hand side")
    rescale.add_argument("--lambda", dest="lam", type=int, default=2)
    rescale.add_argument("--r", type=float, default=3.0)
    rescale.add_argument("--alpha", type=float, default=0.0)
    rescale.add_argument("--seed", type=int, default=0)

    audit = sub.add_parser("energy-audit", help="recompute ledger columns from checkpoints")
    audit.add_argument("directory")
    return parser


def _configure_logging(args: argparse.Namespace):
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _dispatch(args: argparse.Namespace):
    if args.command == "run":
        config = RunConfig.from_path(args.config)
        print(f"Running {config.initial.ic} to T={config.T} (K={config.K}, N={config.N}) …")
        result = cmd_run(config, args.out, resume=args.resume)
        print(f"t={result.state.time:.6g} after {result.state.step_count} steps, "
              f"{len(result.rows)} ledger rows, relative residual {result.relative_residual:.3e}")
    elif args.command == "sweep":
        config = RunConfig.from_path(args.config)
        frame = cmd_sweep(config, args.mu, args.beta, args.r, args.out, workers=args.workers)
        print(frame.to_string(index=False))
    elif args.command == "check-inequalities":
        suite = cmd_check_inequalities(args.seed, args.r, args.fields)
        print(suite.summary().to_string())
        print("All inequality checks passed.")
    elif args.command == "rescale-test":
        report = cmd_rescale_test(args.lam, args.r, alpha=args.alpha, seed=args.seed)
        print(f"lambda={report.lam} r={report.r:g}: max relative error {report.error:.3e}")
    elif args.command == "energy-audit":
        report = cmd_energy_audit(args.directory)
        print(report.table.to_string(index=False))
        print(f"max mismatch {report.max_mismatch:.3e}, energy inequality slack "
              f"{report.energy_inequality.min_slack:.3e}, {report.unmatched} checkpoints without a ledger row")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args)
    try:
        _dispatch(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return ExitCode.CONFIG_ERROR
    except InequalityViolation as exc:
        print(f"assertion failed: {exc}", file=sys.stderr)
        return ExitCode.ASSERTION_FAILED
    except BlowUpError as exc:
        print(f"blow-up detected: {exc}", file=sys.stderr)
        return ExitCode.BLOW_UP
    except (CheckpointError, OSError) as exc:
        print(f"cannot read or write: {exc}", file=sys.stderr)
        return ExitCode.NUMERICAL_FAILURE
    except CBFError as exc:
        logger.exception("run aborted")
        print(f"numerical failure: {exc}", file=sys.stderr)
        return ExitCode.NUMERICAL_FAILURE
    return ExitCode.OK


if __name__ == "__main__":
    sys.exit(main())
