"""
Command-line front end.

    python -m core.cli reproduce main
    python -m core.cli certify --alpha pi/12 --beta pi/4 --gamma 5*pi/12 \
        --theta1 2*pi/9 --theta2=-4*pi/9 --pi-expressions
    python -m core.cli optimize --seed 7 --starts 100 --out best.json
    python -m core.cli scan --grid "0:pi/6:3,0:pi/2:3,pi/3:pi/2:3" --pi-expressions
    python -m core.cli local-bound --expression sliwa5

Exit codes: 0 success, 1 claims failed, 2 infeasible input, 3 usage or parse error.
Reports go to stdout (or --out); logs go to stderr.
"""

import argparse
import logging
import math
import os
import sys
from typing import Any, Dict, Optional, Sequence, Tuple

import core
from core.analysis.report import (
    REFERENCE_POINTS,
    build_violation_report,
    compare_with_reference,
    format_csv,
    format_diff,
    format_json,
)
from core.config import (
    DEFAULT_TOLERANCES,
    AxisRange,
    ConfigValidationError,
    RunConfig,
    ScanConfig,
    SearchConfig,
    Tolerances,
    load_run_config,
    parse_start_points,
)
from core.engine.bell_engine import (
    BUILTIN_EXPRESSIONS,
    BellExpression,
    MeasurementAngles,
    PARTY_NAMES,
    local_bound,
    strategy_label,
    strategy_value,
)
from core.engine.expression_parser import ExpressionParseError, load_bell_expression, parse_angle
from core.engine.state_family import FamilyAngles
from core.search.optimizer import HISTORY_COLUMNS, NoFeasiblePointError, maximize
from core.search.scan import SCAN_COLUMNS, scan

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CLAIMS_FAILED = 1
EXIT_INFEASIBLE = 2
EXIT_USAGE = 3

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

# Parameters each command records in its RunConfig
COMMAND_PARAMETERS = {
    "reproduce": ["which"],
    "certify": ["alpha", "beta", "gamma", "omega", "branch", "theta1", "theta2", "expression", "pi_expressions"],
    "optimize": [
        "seed", "starts", "max_iterations", "search_radius", "restarts", "workers",
        "start_points", "expression", "history", "pi_expressions",
    ],
    "scan": ["grid", "with_s", "theta_steps", "workers", "pi_expressions"],
    "local-bound": ["expression", "negate"],
}

STRATEGY_COLUMNS = ["index"] + [f"{p}{s}" for p in PARTY_NAMES for s in (1, 2)] + ["value"]


class UsageError(Exception):
    """Bad or missing command-line parameters."""
    pass


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- Parameter resolution ---

def _angle(value: Any, name: str, pi_expressions: bool) -> float:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        result = float(value)
    elif isinstance(value, str):
        if pi_expressions:
            result = parse_angle(value)
        else:
            try:
                result = float(value)
            except ValueError:
                raise UsageError(f"'{name}' must be a number in radians, got '{value}' (see --pi-expressions)")
    else:
        raise UsageError(f"'{name}' must be an angle, got {value!r}")
    if not math.isfinite(result):
        raise UsageError(f"'{name}' must be finite")
    return result


def _require(params: Dict[str, Any], name: str) -> Any:
    if params.get(name) is None:
        raise UsageError(f"Missing required parameter '--{name.replace('_', '-')}'")
    return params[name]


def _parse_grid(spec: str, pi_expressions: bool) -> Tuple[AxisRange, AxisRange, AxisRange]:
    """'a0:a1:n,b0:b1:n,c0:c1:n' -> three inclusive axis ranges."""
    axes = [part.strip() for part in str(spec).split(",")]
    if len(axes) != 3:
        raise UsageError(f"--grid needs three comma-separated ranges, got {len(axes)}")
    ranges = []
    for name, axis in zip(("alpha", "beta", "gamma"), axes):
        pieces = axis.split(":")
        if len(pieces) != 3:
            raise UsageError(f"Grid range for {name} must look like start:stop:steps, got '{axis}'")
        try:
            steps = int(pieces[2])
        except ValueError:
            raise UsageError(f"Grid step count for {name} must be an integer, got '{pieces[2]}'")
        ranges.append(AxisRange(
            _angle(pieces[0], f"{name} start", pi_expressions),
            _angle(pieces[1], f"{name} stop", pi_expressions),
            steps,
        ))
    return tuple(ranges)


def _resolve_expression(value: Optional[str]) -> BellExpression:
    value = value or "sliwa5"
    if value in BUILTIN_EXPRESSIONS:
        return BUILTIN_EXPRESSIONS[value]()
    if os.path.exists(value):
        return load_bell_expression(value)
    raise UsageError(
        f"Unknown expression '{value}': not a built-in ({', '.join(BUILTIN_EXPRESSIONS)}) or a readable file"
    )


def _collect(args: argparse.Namespace) -> Tuple[Dict[str, Any], Tolerances]:
    """Config file values first, then every flag that was given on the command line."""
    params: Dict[str, Any] = {}
    tolerances = DEFAULT_TOLERANCES
    if args.config:
        file_config = load_run_config(args.config)
        if file_config.command != args.command:
            raise UsageError(
                f"Config file is for command '{file_config.command}', not '{args.command}'"
            )
        params.update(file_config.parameters)
        tolerances = file_config.tolerances
    for key in COMMAND_PARAMETERS[args.command]:
        value = getattr(args, key, None)
        if value is not None:
            params[key] = value
    run_config = RunConfig(command=args.command, tolerances=tolerances).with_tolerances(
        psd=args.tol_psd, hermiticity=args.tol_herm
    )
    return params, run_config.tolerances


def _emit(text: str, out_path: Optional[str]) -> None:
    if out_path:
        with open(out_path, 'w', encoding='utf-8') as f:
            f.write(text)
        logger.info(f"Wrote {out_path}")
    else:
        sys.stdout.write(text)


def _report_document(report) -> str:
    return format_json(report.to_dict())


# --- Commands ---

def cmd_reproduce(args: argparse.Namespace) -> int:
    params, tolerances = _collect(args)
    which = _require(params, "which")
    if which not in REFERENCE_POINTS:
        raise UsageError(f"Unknown reference point '{which}', expected one of {', '.join(REFERENCE_POINTS)}")
    reference = REFERENCE_POINTS[which]
    run_config = RunConfig(command="reproduce", parameters={"which": which}, tolerances=tolerances)

    report = build_violation_report(
        reference.angles, reference.measurement, run_config,
        prefer_omega=reference.expected.get("omega"), tolerances=tolerances,
    )
    comparisons = compare_with_reference(report, reference)
    _emit(_report_document(report), args.out)

    if not report.claims_verified:
        sys.stderr.write(f"Reproduction of '{which}' failed\n{format_diff(comparisons)}\n")
        if not report.biseparable_premise_passed:
            sys.stderr.write("Certification of the biseparability premise failed\n")
        return EXIT_CLAIMS_FAILED
    logger.info(f"Reproduced '{which}': S = {report.s_value:.6f}")
    return EXIT_OK


def cmd_certify(args: argparse.Namespace) -> int:
    params, tolerances = _collect(args)
    pi = bool(params.get("pi_expressions"))
    if params.get("omega") is not None and params.get("branch") is not None:
        raise UsageError("--omega and --branch are mutually exclusive")

    resolved = {name: _angle(_require(params, name), name, pi) for name in ("alpha", "beta", "gamma", "theta1", "theta2")}
    omega = _angle(params["omega"], "omega", pi) if params.get("omega") is not None else None
    branch = int(params["branch"]) if params.get("branch") is not None else None
    expression = _resolve_expression(params.get("expression"))

    recorded = dict(resolved, omega=omega, branch=branch, expression=params.get("expression") or expression.name)
    run_config = RunConfig(command="certify", parameters=recorded, tolerances=tolerances)
    report = build_violation_report(
        FamilyAngles(resolved["alpha"], resolved["beta"], resolved["gamma"]),
        MeasurementAngles(resolved["theta1"], resolved["theta2"]),
        run_config, omega=omega, branch=branch, expression=expression, tolerances=tolerances,
    )
    _emit(_report_document(report), args.out)

    if not report.feasible:
        sys.stderr.write(f"Infeasible point ({report.infeasible_reason}): {report.error_message}\n")
        return EXIT_INFEASIBLE
    if not report.biseparable_premise_passed:
        return EXIT_CLAIMS_FAILED
    return EXIT_OK


def cmd_optimize(args: argparse.Namespace) -> int:
    params, tolerances = _collect(args)
    pi = bool(params.get("pi_expressions"))
    expression = _resolve_expression(params.get("expression"))

    start_points = None
    if params.get("start_points"):
        entries = [
            entry.split(",") if isinstance(entry, str) else entry
            for entry in params["start_points"]
        ]
        start_points = parse_start_points(
            [[_angle(v, "start point", pi) for v in entry] for entry in entries]
        )

    config = SearchConfig(start_points=start_points, max_workers=params.get("workers"))
    for key in ("starts", "max_iterations", "restarts"):
        if params.get(key) is not None:
            setattr(config, key, int(params[key]))
    if params.get("search_radius") is not None:
        config.search_radius = float(params["search_radius"])
    config.validate()
    seed = int(params.get("seed") or 0)

    history_path = params.get("history")
    if history_path is None and args.out:
        history_path = f"{os.path.splitext(args.out)[0]}.history.csv"

    recorded = {
        "seed": seed,
        "starts": config.starts,
        "max_iterations": config.max_iterations,
        "search_radius": config.search_radius,
        "restarts": config.restarts,
        "start_points": [list(p) for p in start_points] if start_points else None,
        "expression": params.get("expression") or expression.name,
        "history": history_path,
    }
    run_config = RunConfig(command="optimize", parameters=recorded, tolerances=tolerances)

    result = maximize(config, seed, expression, tolerances)
    best = result.best
    report = build_violation_report(
        best.angles, best.measurement, run_config,
        branch=best.branch, expression=expression, tolerances=tolerances,
    )
    document = report.to_dict()
    document["search"] = {
        "seed": seed,
        "stats": result.stats.to_dict(),
        "best_point": best.to_dict(),
        "certification_passed": result.certification.passed,
        "starts": [
            {
                "start_index": s.start_index,
                "seed": s.seed,
                "start_point": list(s.start_point) if s.start_point else None,
                "s_value": s.best.s_value,
                "iterations": s.iterations,
                "converged": s.converged,
                "draws": s.draws,
            }
            for s in result.starts
        ],
    }
    _emit(format_json(document), args.out)
    if history_path:
        _emit(format_csv((row.to_dict() for row in result.history_rows()), HISTORY_COLUMNS), history_path)

    if not (result.certification.passed and report.biseparable_premise_passed):
        sys.stderr.write("Best point failed certification\n")
        return EXIT_CLAIMS_FAILED
    return EXIT_OK


def cmd_scan(args: argparse.Namespace) -> int:
    params, tolerances = _collect(args)
    pi = bool(params.get("pi_expressions"))
    alpha, beta, gamma = _parse_grid(_require(params, "grid"), pi)
    config = ScanConfig(
        alpha=alpha, beta=beta, gamma=gamma,
        with_s=bool(params.get("with_s")),
        theta_steps=int(params.get("theta_steps") or 12),
        max_workers=params.get("workers"),
    )
    config.validate()
    result = scan(config, tolerances=tolerances)

    if args.format == "json":
        recorded = dict(params)
        run_config = RunConfig(command="scan", parameters=recorded, tolerances=tolerances)
        document = {
            "tool_version": core.__version__,
            "run_config": run_config.to_dict(),
            "cell_count": len(result.cells),
            "feasible_fraction": result.feasible_fraction,
            "cells": result.rows(),
        }
        _emit(format_json(document), args.out)
    else:
        _emit(format_csv(result.rows(), SCAN_COLUMNS), args.out)
    return EXIT_OK


def cmd_local_bound(args: argparse.Namespace) -> int:
    params, tolerances = _collect(args)
    expression = _resolve_expression(params.get("expression"))
    if params.get("negate"):
        expression = expression.negated()
    result = local_bound(expression)

    rows = []
    for index, strategy in enumerate(result.strategies):
        row = {"index": index, "value": strategy_value(expression, strategy)}
        for party, outcomes in zip(PARTY_NAMES, strategy):
            for setting, outcome in enumerate(outcomes, start=1):
                row[f"{party}{setting}"] = outcome
        rows.append(row)

    if args.format == "csv":
        _emit(format_csv(rows, STRATEGY_COLUMNS), args.out)
    else:
        run_config = RunConfig(command="local-bound", parameters=dict(params), tolerances=tolerances)
        document = {
            "tool_version": core.__version__,
            "run_config": run_config.to_dict(),
            "expression": expression.name,
            "terms": expression.to_dict(),
            "algebraic_maximum": expression.algebraic_maximum(),
            "local_bound": result.bound,
            "strategy_count": len(result.strategies),
            "strategies": [strategy_label(s) for s in result.strategies],
        }
        _emit(format_json(document), args.out)
    return EXIT_OK


# --- Parser ---

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML/JSON run configuration, or a report embedding one")
    common.add_argument("--out", help="Write the output here instead of stdout")
    common.add_argument("--tol-psd", type=float, default=None, help="Eigenvalue tolerance for PSD/PPT checks")
    common.add_argument("--tol-herm", type=float, default=None, help="Hermiticity tolerance")

    angles = argparse.ArgumentParser(add_help=False)
    angles.add_argument(
        "--pi-expressions", action="store_true", default=None,
        help="Accept angles such as 'pi/12' or '-4*pi/9'",
    )

    parser = _ArgumentParser(
        prog="bellsep",
        description="Fully biseparable 3-qubit states that violate a tripartite Bell inequality.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")
    parser.add_argument("--version", action="version", version=f"%(prog)s {core.__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("reproduce", parents=[common], help="Re-derive a published parameter point")
    p.add_argument("which", nargs="?", choices=sorted(REFERENCE_POINTS), default=None)
    p.set_defaults(handler=cmd_reproduce)

    p = sub.add_parser("certify", parents=[common, angles], help="Full report on one parameter point")
    for name in ("alpha", "beta", "gamma", "theta1", "theta2"):
        p.add_argument(f"--{name}", default=None)
    choice = p.add_mutually_exclusive_group()
    choice.add_argument("--omega", default=None, help="Use this omega instead of a solved branch")
    choice.add_argument("--branch", type=int, default=None, help="Index into the solved omega branches")
    p.add_argument("--expression", default=None, help="Built-in name or expression file (default sliwa5)")
    p.set_defaults(handler=cmd_certify)

    p = sub.add_parser("optimize", parents=[common, angles], help="Multi-start Nelder-Mead search for the largest S")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--starts", type=int, default=None)
    p.add_argument("--max-iterations", type=int, default=None)
    p.add_argument("--search-radius", type=float, default=None)
    p.add_argument("--restarts", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument(
        "--start-point", dest="start_points", action="append", default=None,
        help="Fixed start 'alpha,beta,gamma,theta1,theta2'; repeatable",
    )
    p.add_argument("--expression", default=None)
    p.add_argument("--history", default=None, help="Convergence history CSV")
    p.set_defaults(handler=cmd_optimize)

    p = sub.add_parser("scan", parents=[common, angles], help="Feasibility scan over (alpha, beta, gamma)")
    p.add_argument("--grid", default=None, help="'a0:a1:n,b0:b1:n,c0:c1:n'")
    p.add_argument("--with-s", action="store_true", default=None, help="Also search a coarse theta grid for S")
    p.add_argument("--theta-steps", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.set_defaults(handler=cmd_scan)

    p = sub.add_parser("local-bound", parents=[common], help="Exhaustive local bound of a Bell expression")
    p.add_argument("--expression", default=None, help="Built-in name or expression file (default sliwa5)")
    p.add_argument("--negate", action="store_true", default=None)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.set_defaults(handler=cmd_local_bound)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    level = logging.WARNING
    if args.verbose == 1:
        level = logging.INFO
    elif args.verbose >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)

    try:
        return args.handler(args)
    except NoFeasiblePointError as e:
        sys.stderr.write(f"{e}\n")
        return EXIT_INFEASIBLE
    except (UsageError, ConfigValidationError, ExpressionParseError) as e:
        sys.stderr.write(f"{parser.prog} {args.command}: error: {e}\n")
        return EXIT_USAGE
    except ValueError as e:
        sys.stderr.write(f"{parser.prog} {args.command}: error: {e}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
