"""Command line driver: ``measurenet run scenario.scn [options]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..geometry import StructureError
from ..network_solver import CycleError, network_continuity, solve
from .report import build_report
from .scenario import ScenarioError, parse_scenario

EXIT_OK, EXIT_CHECK_FAILED, EXIT_ERROR = 0, 1, 2


def _times(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated times, got {text!r}") from None


def _positive_int(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="measurenet", description="Measure transport on oriented networks.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="solve a scenario file and write a report")
    run.add_argument("scenario", type=Path, help="scenario file (YAML)")
    run.add_argument("--algorithm", choices=("auto", "levelwise", "timestepped"), default="auto")
    run.add_argument("--trace", type=_times, default=[], help="extra trace times, comma separated")
    run.add_argument("--check-balance", action="store_true", help="check mass balance and the weak form")
    run.add_argument("--check-continuity", type=Path, metavar="FILE_B", help="compare against a second scenario")
    run.add_argument("--continuity-constant", type=float, default=3.0, help="constant C in lhs <= C rhs (default 3)")
    run.add_argument("--out", type=Path, help="output directory (default: JSON on stdout)")
    run.add_argument("--lp-grid", type=_positive_int, default=2048, help="cells of the BL distance grid")
    run.add_argument("--step", type=float, help="window length of the time-stepping solver")
    return parser


def run(args) -> int:
    sf = parse_scenario(args.scenario)
    try:
        solution = solve(sf.scenario, args.algorithm, args.step)
    except CycleError as exc:
        raise CycleError(f"{exc} (try --algorithm timestepped)") from None
    continuity = None
    if args.check_continuity is not None:
        other = parse_scenario(args.check_continuity)
        if not sf.scenario.network.same_structure(other.scenario.network):
            raise StructureError("--check-continuity needs a scenario on the same network, schedules and horizon")
        other_sol = solve(other.scenario, solution.algorithm, args.step)
        lhs, rhs = network_continuity(solution, other_sol, args.lp_grid)
        C = args.continuity_constant
        continuity = {
            "other": str(args.check_continuity),
            "lhs": lhs,
            "rhs": rhs,
            "constant": C,
            "passed": bool(lhs <= C * rhs + 1e-12),
        }
    out = sf.outputs
    report = build_report(
        solution,
        source=str(args.scenario),
        trace_times=[*out.trace_times, *args.trace],
        check_balance=out.check_balance or args.check_balance,
        distance_pairs=out.distance_pairs,
        continuity=continuity,
        lp_cells=args.lp_grid,
    )
    if args.out is None:
        sys.stdout.write(report.to_json())
    else:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "report.json").write_text(report.to_json(), encoding="utf-8")
        (args.out / "atoms.csv").write_text(report.atoms_csv(), encoding="utf-8")
        (args.out / "density.csv").write_text(report.density_csv(), encoding="utf-8")
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return run(args)
    except (ScenarioError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
