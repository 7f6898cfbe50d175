# core/analysis/report.py
#
# Violation reports: one family point pushed through the whole pipeline
# (omega branches, weights, certification, correlators, Bell value, local
# bound) and the JSON/CSV writers every CLI command shares.

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, TextIO

import core
from core.config import DEFAULT_TOLERANCES, RunConfig, Tolerances
from core.engine.bell_engine import (
    BellExpression,
    MeasurementAngles,
    correlation_tensor,
    evaluate,
    local_bound,
    sliwa5_expression,
)
from core.engine.state_family import (
    FamilyAngles,
    FamilyState,
    InfeasibleError,
    InvalidWeightsError,
    SingularSystemError,
    assemble_state,
    certify,
    require_branches,
    solve_omega,
    valid_branches,
)

logger = logging.getLogger(__name__)

SIGNIFICANT_DIGITS = 12
REFERENCE_TOLERANCE = 1e-3


@dataclass(frozen=True)
class ReferencePoint:
    """A published parameter point and the values it is expected to produce."""
    name: str
    alpha: float
    beta: float
    gamma: float
    theta1: float
    theta2: float
    expected: Dict[str, float] = field(default_factory=dict)

    @property
    def angles(self) -> FamilyAngles:
        return FamilyAngles(self.alpha, self.beta, self.gamma)

    @property
    def measurement(self) -> MeasurementAngles:
        return MeasurementAngles(self.theta1, self.theta2)


REFERENCE_POINTS: Dict[str, ReferencePoint] = {
    "main": ReferencePoint(
        name="main",
        alpha=math.pi / 12, beta=math.pi / 4, gamma=5 * math.pi / 12,
        theta1=2 * math.pi / 9, theta2=-4 * math.pi / 9,
        expected={"omega": 0.5682, "p1": 0.0636, "p2": 0.2737, "p4": 0.3890, "s_value": 3.0069},
    ),
    "appendix": ReferencePoint(
        name="appendix",
        alpha=0.1545, beta=0.8460, gamma=4.4903,
        theta1=0.6897, theta2=-1.2956,
        expected={"omega": 0.4808, "p1": 0.0338, "p2": 0.2433, "p4": 0.4796, "s_value": 3.0187},
    ),
}


@dataclass
class Comparison:
    quantity: str
    expected: float
    computed: Optional[float]
    tolerance: float

    @property
    def difference(self) -> Optional[float]:
        if self.computed is None:
            return None
        return self.computed - self.expected

    @property
    def ok(self) -> bool:
        return self.difference is not None and abs(self.difference) <= self.tolerance

    def to_dict(self) -> Dict[str, Any]:
        return {
            "quantity": self.quantity,
            "expected": self.expected,
            "computed": self.computed,
            "difference": self.difference,
            "tolerance": self.tolerance,
            "ok": self.ok,
        }


@dataclass
class ViolationReport:
    run_config: RunConfig
    angles: FamilyAngles
    measurement: MeasurementAngles
    expression_name: str
    local_bound: float
    omega_solutions: Optional[Dict[str, Any]] = None
    branch: Optional[int] = None
    omega: Optional[float] = None
    weights: Optional[Dict[str, float]] = None
    certification: Optional[Dict[str, Any]] = None
    correlations: Optional[Dict[str, float]] = None
    s_value: Optional[float] = None
    biseparable_premise_passed: bool = False
    bell_violated: bool = False
    infeasible_reason: Optional[str] = None
    error_message: Optional[str] = None
    comparisons: List[Comparison] = field(default_factory=list)
    tool_version: str = core.__version__

    @property
    def feasible(self) -> bool:
        return self.infeasible_reason is None

    @property
    def claims_verified(self) -> bool:
        return self.biseparable_premise_passed and all(c.ok for c in self.comparisons)

    def computed_values(self) -> Dict[str, Optional[float]]:
        weights = self.weights or {}
        return {
            "omega": self.omega,
            "p1": weights.get("p1"),
            "p2": weights.get("p2"),
            "p4": weights.get("p4"),
            "s_value": self.s_value,
        }

    def to_dict(self) -> Dict[str, Any]:
        document = {
            "tool_version": self.tool_version,
            "run_config": self.run_config.to_dict(),
            "inputs": {
                "alpha": self.angles.alpha,
                "beta": self.angles.beta,
                "gamma": self.angles.gamma,
                "theta1": self.measurement.theta1,
                "theta2": self.measurement.theta2,
            },
            "omega_solutions": self.omega_solutions,
            "branch": self.branch,
            "omega": self.omega,
            "weights": self.weights,
            "certification": self.certification,
            "correlations": self.correlations,
            "expression": self.expression_name,
            "s_value": self.s_value,
            "local_bound": self.local_bound,
            "verdict": {
                "feasible": self.feasible,
                "biseparable_premise_passed": self.biseparable_premise_passed,
                "bell_violated": self.bell_violated,
                "infeasible_reason": self.infeasible_reason,
            },
        }
        if self.error_message:
            document["verdict"]["message"] = self.error_message
        if self.comparisons:
            document["comparisons"] = [c.to_dict() for c in self.comparisons]
            document["verdict"]["claims_verified"] = self.claims_verified
        return document


def _solutions_dict(solutions, valid: Sequence[int]) -> Dict[str, Any]:
    return {
        "coeff_a": solutions.coeffA,
        "coeff_b": solutions.coeffB,
        "coeff_c": solutions.coeffC,
        "discriminant": solutions.discriminant,
        "degenerate": solutions.degenerate,
        "branches": list(solutions.branches),
        "residuals": list(solutions.residuals),
        "valid_branches": list(valid),
        "equivalent_branches": [solutions.equivalent_branch(i) for i in range(len(solutions.branches))],
    }


def _matching_branch(branches: Sequence[float], omega: float) -> Optional[int]:
    for index, candidate in enumerate(branches):
        if abs(math.remainder(candidate - omega, 2 * math.pi)) <= 1e-12:
            return index
    return None


def _select_state(
    angles: FamilyAngles,
    measurement: MeasurementAngles,
    expression: BellExpression,
    tolerances: Tolerances,
    omega: Optional[float],
    branch: Optional[int],
    prefer_omega: Optional[float],
    report: ViolationReport,
) -> FamilyState:
    """Pick the state the report describes; raises FamilyError when there is none."""
    solutions = solve_omega(angles, tolerances)
    valid = []
    if solutions.feasible:
        valid = valid_branches(angles, tolerances, solutions)
    report.omega_solutions = _solutions_dict(solutions, [i for i, _ in valid])

    if omega is not None:
        # explicit omega need not be a root; certification shows whether it works
        report.branch = _matching_branch(solutions.branches, omega)
        return assemble_state(angles, omega, tolerances)

    require_branches(angles, tolerances)
    if branch is not None:
        if not 0 <= branch < len(solutions.branches):
            raise ValueError(f"Branch {branch} out of range, {len(solutions.branches)} branch(es) exist")
        report.branch = branch
        return assemble_state(angles, solutions.branches[branch], tolerances)

    if not valid:
        raise InfeasibleError(
            f"No omega branch of {len(solutions.branches)} gives nonnegative weights", reason="negative_weights"
        )
    if prefer_omega is not None:
        index, state = min(valid, key=lambda item: (abs(item[1].omega - prefer_omega), item[0]))
    else:
        scored = [(evaluate(expression, correlation_tensor(s.rho, measurement, tolerances)), i, s) for i, s in valid]
        _, index, state = max(scored, key=lambda item: (item[0], -item[1]))
    report.branch = index
    return state


def build_violation_report(
    angles: FamilyAngles,
    measurement: MeasurementAngles,
    run_config: RunConfig,
    omega: Optional[float] = None,
    branch: Optional[int] = None,
    prefer_omega: Optional[float] = None,
    expression: Optional[BellExpression] = None,
    tolerances: Optional[Tolerances] = None,
) -> ViolationReport:
    """
    Full pipeline on one point. Without omega or branch, the valid branch with
    the largest Bell value is used (prefer_omega picks the nearest one instead).
    Infeasible inputs produce a report with infeasible_reason set.
    """
    expression = expression or sliwa5_expression()
    tolerances = tolerances or run_config.tolerances or DEFAULT_TOLERANCES
    report = ViolationReport(
        run_config=run_config,
        angles=angles,
        measurement=measurement,
        expression_name=expression.name,
        local_bound=local_bound(expression).bound,
    )

    try:
        state = _select_state(angles, measurement, expression, tolerances, omega, branch, prefer_omega, report)
    except InfeasibleError as e:
        report.infeasible_reason = e.reason
        report.error_message = str(e)
    except SingularSystemError as e:
        report.infeasible_reason = "singular"
        report.error_message = str(e)
    except InvalidWeightsError as e:
        report.infeasible_reason = "negative_weights"
        report.error_message = str(e)
        report.weights = e.weights.to_dict()
    if not report.feasible:
        logger.warning(f"Infeasible point {angles}: {report.error_message}")
        return report

    record = certify(state, tolerances)
    tensor = correlation_tensor(state.rho, measurement, tolerances)
    s_value = evaluate(expression, tensor)

    report.omega = state.omega
    report.weights = state.weights.to_dict()
    report.certification = record.to_dict()
    report.correlations = tensor.to_dict()
    report.s_value = s_value
    report.biseparable_premise_passed = record.passed
    report.bell_violated = s_value > report.local_bound + tolerances.violation_margin
    logger.info(
        f"Branch {report.branch} (omega={state.omega:.6f}): S = {s_value:.10f}, "
        f"premise {'passed' if record.passed else 'FAILED'}"
    )
    return report


def compare_with_reference(
    report: ViolationReport, reference: ReferencePoint, tolerance: float = REFERENCE_TOLERANCE
) -> List[Comparison]:
    computed = report.computed_values()
    comparisons = [
        Comparison(quantity=name, expected=expected, computed=computed.get(name), tolerance=tolerance)
        for name, expected in reference.expected.items()
    ]
    report.comparisons = comparisons
    return comparisons


def format_diff(comparisons: Iterable[Comparison]) -> str:
    """Human-readable expected vs computed table, one quantity per line."""
    lines = [f"{'quantity':<10} {'expected':>14} {'computed':>14} {'diff':>12}  status"]
    for c in comparisons:
        computed = "-" if c.computed is None else f"{c.computed:.6f}"
        diff = "-" if c.difference is None else f"{c.difference:+.2e}"
        lines.append(
            f"{c.quantity:<10} {c.expected:>14.6f} {computed:>14} {diff:>12}  {'ok' if c.ok else 'MISMATCH'}"
        )
    return "\n".join(lines)


# --- Writers ---

def round_significant(value: Any, digits: int = SIGNIFICANT_DIGITS) -> Any:
    """Round every float in a nested document; non-finite floats become None."""
    if isinstance(value, bool) or value is None:
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            return None
        return float(f"{value:.{digits}g}")
    if isinstance(value, int):
        return value
    if isinstance(value, dict):
        return {k: round_significant(v, digits) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [round_significant(v, digits) for v in value]
    if hasattr(value, "item"):  # numpy scalar
        return round_significant(value.item(), digits)
    return value


def format_json(document: Dict[str, Any], exact_keys: Sequence[str] = ("run_config",)) -> str:
    """Floats at 12 significant digits, except under exact_keys so an embedded config re-runs bit for bit."""
    rounded = {k: v if k in exact_keys else round_significant(v) for k, v in document.items()}
    return json.dumps(rounded, indent=2, allow_nan=False) + "\n"


def _csv_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "" if not math.isfinite(value) else f"{value:.{SIGNIFICANT_DIGITS}g}"
    if isinstance(value, (list, tuple)):
        return ";".join(_csv_cell(v) for v in value)
    return str(value)


def write_csv(rows: Iterable[Dict[str, Any]], columns: Sequence[str], stream: TextIO) -> None:
    """Fixed column order; lists are ';'-joined and floats printed at 12 significant digits."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_csv_cell(row.get(column)) for column in columns])


def format_csv(rows: Iterable[Dict[str, Any]], columns: Sequence[str]) -> str:
    buffer = io.StringIO()
    write_csv(rows, columns, buffer)
    return buffer.getvalue()
