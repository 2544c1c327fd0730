"""Command-line front end: ``porosplit run|sweep|verify|list-cases``.

Exit codes: 0 success, 1 verification failure, 2 usage error, 3 solver non-convergence.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path
from typing import Sequence

from . import cases
from .cases import NonConvergenceError, RunReport, SweepSpec
from .io import CaseFileError, parse_case, write_report_csv, write_vtk
from .solvers import SCHEMES

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_NONCONVERGED = 0, 1, 2, 3

logger = logging.getLogger("porosplit")


class UsageError(Exception):
    pass


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0 or not math.isfinite(value):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return value


def _nonneg_float(text: str) -> float:
    value = float(text)
    if value < 0 or not math.isfinite(value):
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {text!r}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


def _add_case_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--case", type=Path, help="YAML case file")
    src.add_argument("--builtin", choices=sorted(cases.BUILTIN_CASES), help="bundled case")
    p.add_argument("--scheme", choices=SCHEMES)
    p.add_argument("--alpha", type=_positive_float, help="fixed-stress coefficient")
    p.add_argument("--c", type=_nonneg_float, help="stabilization strength (tau = c tau*)")
    p.add_argument("--stab-region", help="'all', 'none' or region names joined by '+'")
    p.add_argument("--dt0", type=_positive_float, help="first time step (s)")
    p.add_argument("--steps", type=_positive_int, help="number of time steps")
    p.add_argument("--rel-tol", type=_positive_float, help="fixed-stress relative tolerance")
    p.add_argument("--max-outer", type=_positive_int, help="fixed-stress iteration limit")
    p.add_argument("--out", type=Path, help="output directory (default: $POROSPLIT_OUT or .)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="porosplit", description="Linear Biot poromechanics with fixed-stress splitting.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one case and write VTK + CSV")
    _add_case_args(run)

    sweep = sub.add_parser("sweep", help="run a parameter sweep and write a CSV table")
    _add_case_args(sweep)
    sweep.add_argument(
        "--axis", action="append", default=[], metavar="NAME=VALUES",
        help="sweep axis; VALUES is start:stop:step (inclusive) or a comma list. "
        "Names: alpha, c, dt0, steps, rel_tol, scheme, stab_region, k.<region>",
    )
    sweep.add_argument("--workers", type=_positive_int, default=1)
    sweep.add_argument("--cap", type=_positive_int, default=10000, help="maximum number of sweep points")

    verify = sub.add_parser("verify", help="run the acceptance checks")
    verify.add_argument("--out", type=Path)
    verify.add_argument("--only", action="append", type=int, metavar="N", help="run only criterion N (repeatable)")

    sub.add_parser("list-cases", help="list bundled cases")
    return parser


def _out_dir(args) -> Path:
    out = args.out or Path(os.environ.get("POROSPLIT_OUT", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_case(args) -> cases.CaseSpec:
    spec = parse_case(args.case) if args.case else cases.builtin_case(args.builtin)
    try:
        return spec.with_overrides(
            scheme=args.scheme, alpha=args.alpha, c=args.c, stab_region=args.stab_region,
            dt0=args.dt0, steps=args.steps, rel_tol=args.rel_tol, max_outer_iters=args.max_outer,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


_AXIS_TYPES = {"alpha": float, "c": float, "dt0": float, "rel_tol": float, "steps": int, "scheme": str, "stab_region": str}


def parse_axis(text: str, region_names: Sequence[str] = ()) -> tuple[str, tuple]:
    """Parse ``name=start:stop:step`` (inclusive) or ``name=v1,v2,...``."""
    if "=" not in text:
        raise UsageError(f"axis {text!r} must look like name=values")
    name, values = text.split("=", 1)
    name = name.strip()
    if name.startswith("k."):
        if region_names and name[2:] not in region_names:
            raise UsageError(f"axis {name!r}: unknown region; known: {', '.join(region_names)}")
        kind = float
    elif name in _AXIS_TYPES:
        kind = _AXIS_TYPES[name]
    else:
        raise UsageError(f"unknown axis {name!r}")
    try:
        if ":" in values and kind is not str:
            parts = values.split(":")
            if len(parts) != 3:
                raise ValueError("range must be start:stop:step")
            start, stop, step = (float(p) for p in parts)
            if step <= 0 or stop < start:
                raise ValueError("range needs step > 0 and stop >= start")
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            vals = tuple(kind(float(f"{start + i * step:.12g}")) for i in range(n))
        else:
            vals = tuple(kind(v.strip()) for v in values.split(",") if v.strip())
    except ValueError as exc:
        raise UsageError(f"axis {name!r}: {exc}") from exc
    if not vals:
        raise UsageError(f"axis {name!r} has no values")
    if name == "scheme" and any(v not in SCHEMES for v in vals):
        raise UsageError(f"scheme values must be among {SCHEMES}")
    return name, vals


def _summary_line(row: cases.StepRow) -> str:
    return (
        f"step {row.step:4d}  t={row.time:.6g}  its={row.outer_iterations:4d}  "
        f"ratio={row.residual_ratio:.3e}  checkerboard={row.checkerboard['all']:.6e}"
    )


def write_run_outputs(report: RunReport, out: Path) -> None:
    for n, (p, u) in enumerate(zip(report.pressures, report.displacements), start=1):
        write_vtk(report.grid, {"pressure": p, "displacement": u}, out / f"pressure_step{n}.vtk", title=f"{report.case.name} step {n}")
    write_report_csv(report, out / "report.csv")


def cmd_run(args) -> int:
    spec = _load_case(args)
    out = _out_dir(args)
    try:
        report = cases.run_case(spec)
        status = EXIT_OK
    except NonConvergenceError as exc:
        report = exc.report
        status = EXIT_NONCONVERGED
    for row in report.rows:
        print(_summary_line(row))
    write_run_outputs(report, out)
    if status == EXIT_NONCONVERGED:
        last = report.rows[-1]
        print(
            f"non-convergence at step {last.step}: {last.outer_iterations} iterations, "
            f"residual ratio {last.residual_ratio:.3e} > rel_tol {spec.solver.rel_tol:g}",
            file=sys.stderr,
        )
    return status


def cmd_sweep(args) -> int:
    spec = _load_case(args)
    axes = tuple(parse_axis(a, spec.region_names) for a in args.axis)
    names = [a for a, _ in axes]
    if len(set(names)) != len(names):
        raise UsageError("each axis may appear only once")
    sweep = SweepSpec(spec, axes, cap=args.cap)
    try:
        sweep.points()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    table = cases.run_sweep(sweep, workers=args.workers)
    out = _out_dir(args)
    write_report_csv(table, out / "sweep.csv")
    for row in table.rows:
        point = " ".join(f"{a}={row[a]}" for a in names)
        print(f"{point}  its={row.get('first_step_iterations', '-')}  converged={row['converged']}  {row.get('error', '')}".rstrip())
    return EXIT_OK


def cmd_verify(args) -> int:
    from . import verification

    out = _out_dir(args)
    results = verification.run_all(out, only=args.only)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED


def cmd_list_cases(args) -> int:
    for name, factory in sorted(cases.BUILTIN_CASES.items()):
        doc = (factory.__doc__ or "").strip().splitlines()
        print(f"{name:24s} {doc[0] if doc else ''}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "verify": cmd_verify, "list-cases": cmd_list_cases}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except (UsageError, CaseFileError) as exc:
        print(f"porosplit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"porosplit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
