"""Command-line front end.

Exit codes: 0 success, 1 validation error, 2 numerical failure,
3 stability-gate refusal.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional

import numpy as np

from .config import resolve_problem
from .contraction import contraction_report, reference_samples
from .core import MacroStepPlan, Strategy
from .errors import NumericalError, StabilityGateError, ValidationError
from .harness import DEFAULT_LADDER, convergence_study, emit_trajectory_csv, plan_lphi, run_plan, stability_sweep
from .problems import catalog

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_GATE = 0, 1, 2, 3

log = logging.getLogger("multirate")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _add_problem(p, default=None):
    p.add_argument("--problem", default=default, help="catalog id (see `catalog`)")
    p.add_argument("--config", help="problem YAML file, or key=value,... overrides for --problem")
    p.add_argument("--t-end", type=float, dest="t_end", help="override the horizon of a catalog problem")


def _add_plan(p, H_default=None):
    p.add_argument("--strategy", default="fully-decoupled",
                   choices=[s.value for s in Strategy])
    p.add_argument("--scheme", help="base scheme id, or slow,fast pair (default: explicit-euler, implicit-euler for DAEs)")
    p.add_argument("--H", type=float, default=H_default, help="macro step")
    p.add_argument("--m", type=int, default=1, help="multirate factor (micro steps per macro step)")
    p.add_argument("--k", type=int, default=1, help="sweeps per window (DAE only)")
    p.add_argument("--extrap-order", type=int, default=0, dest="extrap_order")
    p.add_argument("--interp-order", type=int, default=1, dest="interp_order")
    p.add_argument("--dense-output", action="store_true", dest="dense_output")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="multirate", description="Multirate integration of partitioned ODEs and index-1 DAEs.")
    parser.add_argument("--log-level", default="WARNING", help=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="single integration, trajectory CSV")
    _add_problem(p)
    _add_plan(p)
    p.add_argument("--out", help="output path (default: standard output)")
    p.add_argument("--force", action="store_true", help="run even if the stability gate refuses")
    p.add_argument("--seed", type=int, help="seed for randomized analyzer samples")

    p = sub.add_parser("convergence", help="step-size study, report CSV plus fitted slopes")
    _add_problem(p)
    _add_plan(p)
    p.add_argument("--grid", help="comma-separated macro steps, strictly decreasing (default: H, H/2, ..., 5 rungs)")
    p.add_argument("--drop", type=int, default=1, help="largest step sizes left out of the fit")
    p.add_argument("--out", help="report CSV path (default: standard output)")
    p.add_argument("--seed", type=int, help=argparse.SUPPRESS)

    p = sub.add_parser("contraction", help="Lipschitz estimates and stability verdicts")
    _add_problem(p)
    p.add_argument("--H", type=float, default=0.1, help="macro step used for L_phi")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--extrap-order", type=int, default=0, dest="extrap_order")
    p.add_argument("--samples", type=int, default=0, help="extra randomly perturbed sample states")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = sub.add_parser("sweep", help="stability sweep over (b, d) for DAE-LIN")
    _add_problem(p, default="dae-lin")
    p.add_argument("--strategy", default="fully-decoupled", choices=[s.value for s in Strategy])
    p.add_argument("--grid", default="0:0,0.4:0.4,1.5:1.5", help="comma-separated b:d points")
    p.add_argument("--H", type=float, default=0.05)
    p.add_argument("--m", type=int, default=4)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--windows", type=int, default=20)
    p.add_argument("--extrap-order", type=int, default=0, dest="extrap_order")
    p.add_argument("--interp-order", type=int, default=0, dest="interp_order")
    p.add_argument("--out")
    p.add_argument("--seed", type=int, help=argparse.SUPPRESS)

    p = sub.add_parser("catalog", help="list built-in problems")
    p.add_argument("--out")
    return parser


def _schemes(args, is_dae):
    if args.scheme is None:
        default = "implicit-euler" if is_dae else "explicit-euler"
        return default, default
    parts = [s.strip() for s in args.scheme.split(",")]
    if len(parts) == 1:
        return parts[0], parts[0]
    if len(parts) == 2:
        return parts[0], parts[1]
    raise ValidationError(f"--scheme takes one id or a slow,fast pair (got {args.scheme!r})")


def _plan(args, problem, H) -> MacroStepPlan:
    slow, fast = _schemes(args, problem.is_dae)
    return MacroStepPlan(H=H, m=args.m, strategy=Strategy.parse(args.strategy), scheme_slow=slow, scheme_fast=fast,
                         extrap_order=args.extrap_order, interp_order=args.interp_order, k=args.k,
                         dense_output=args.dense_output)


def _write(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _floats(text: str, name: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ValidationError(f"{name}: expected comma-separated numbers (got {text!r})") from None


def cmd_run(args) -> int:
    entry = resolve_problem(args.problem, args.config, args.t_end)
    if args.H is None:
        raise ValidationError("--H is required")
    plan = _plan(args, entry.problem, args.H)
    gate = None
    if entry.problem.is_dae:
        samples = reference_samples(entry.problem, extra=0, seed=args.seed)
        gate = contraction_report(entry.problem, lphi=plan_lphi(plan), k=plan.k, samples=samples)
    traj = run_plan(entry.problem, plan, gate=gate, force=args.force)
    for w in dict.fromkeys(traj.warnings):
        log.warning(w)
    _write(emit_trajectory_csv(traj), args.out)
    return EXIT_OK


def cmd_convergence(args) -> int:
    entry = resolve_problem(args.problem, args.config, args.t_end)
    if args.grid:
        ladder = _floats(args.grid, "--grid")
    elif args.H is not None:
        ladder = [args.H * 2.0**-j for j in range(len(DEFAULT_LADDER))]
    else:
        ladder = list(DEFAULT_LADDER)
    plan = _plan(args, entry.problem, ladder[0] if ladder else 1.0)
    report = convergence_study(entry, plan, ladder, drop=args.drop)
    _write(report.to_csv(), args.out)
    if args.out:
        sys.stdout.write(report.slope_lines())
    else:
        sys.stdout.write("\n" + report.slope_lines())
    return EXIT_OK


def cmd_contraction(args) -> int:
    entry = resolve_problem(args.problem, args.config, args.t_end)
    if not entry.problem.is_dae:
        raise ValidationError(f"{entry.id} is an ODE; the contraction analysis needs a DAE problem")
    plan = MacroStepPlan(H=args.H, extrap_order=args.extrap_order, k=args.k)
    samples = reference_samples(entry.problem, extra=args.samples, seed=args.seed)
    report = contraction_report(entry.problem, lphi=plan_lphi(plan), k=args.k, samples=samples)
    _write(report.to_text(), args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    grid = []
    for item in filter(None, (s.strip() for s in args.grid.split(","))):
        b, sep, d = item.partition(":")
        try:
            if not sep:
                raise ValueError
            grid.append((float(b), float(d)))
        except ValueError:
            raise ValidationError(f"--grid: expected b:d pairs (got {item!r})") from None
    if not grid:
        raise ValidationError("--grid is empty")
    if args.config:
        raise ValidationError("sweep takes the (b, d) grid via --grid, not --config")
    table = stability_sweep(args.problem, grid, args.strategy, args.k, args.H, args.m, args.windows,
                            args.extrap_order, args.interp_order)
    _write(table.to_csv(), args.out)
    return EXIT_OK


def cmd_catalog(args) -> int:
    lines = [f"{key}\t{entry.description}\n" for key, entry in sorted(catalog().items())]
    _write("".join(lines), args.out)
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "convergence": cmd_convergence,
    "contraction": cmd_contraction,
    "sweep": cmd_sweep,
    "catalog": cmd_catalog,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            return COMMANDS[args.command](args)
    except StabilityGateError as exc:
        print(f"error: {exc} (use --force to run anyway)", file=sys.stderr)
        return EXIT_GATE
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
