# core/search/scan.py
#
# Feasibility map over a grid of (alpha, beta, gamma). Each cell records the
# omega condition, which branches give nonnegative weights, whether their
# states certify, and optionally the best Bell value over a coarse theta grid.

import concurrent.futures
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from core.config import DEFAULT_TOLERANCES, ScanConfig, Tolerances
from core.engine.bell_engine import BellExpression, MeasurementAngles, bell_value, sliwa5_expression
from core.engine.state_family import FamilyAngles, FamilyState, certify, solve_omega, valid_branches

logger = logging.getLogger(__name__)

SCAN_COLUMNS = [
    "alpha", "beta", "gamma",
    "coeff_a", "coeff_b", "coeff_c", "discriminant", "degenerate",
    "branch_count", "branches", "valid_branches",
    "feasible", "certified",
    "best_s", "best_theta1", "best_theta2",
]


@dataclass
class ScanCell:
    alpha: float
    beta: float
    gamma: float
    coeff_a: float
    coeff_b: float
    coeff_c: float
    discriminant: float
    degenerate: bool
    branches: Tuple[float, ...]
    valid_branches: Tuple[int, ...]
    certified: Optional[bool] = None  # None when no branch is valid
    best_s: Optional[float] = None
    best_theta1: Optional[float] = None
    best_theta2: Optional[float] = None

    @property
    def feasible(self) -> bool:
        return bool(self.valid_branches)

    def to_row(self) -> Dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "gamma": self.gamma,
            "coeff_a": self.coeff_a,
            "coeff_b": self.coeff_b,
            "coeff_c": self.coeff_c,
            "discriminant": self.discriminant,
            "degenerate": self.degenerate,
            "branch_count": len(self.branches),
            "branches": list(self.branches),
            "valid_branches": list(self.valid_branches),
            "feasible": self.feasible,
            "certified": self.certified,
            "best_s": self.best_s,
            "best_theta1": self.best_theta1,
            "best_theta2": self.best_theta2,
        }


@dataclass
class ScanResult:
    config: ScanConfig
    cells: List[ScanCell]

    @property
    def feasible_fraction(self) -> float:
        if not self.cells:
            return 0.0
        return sum(1 for c in self.cells if c.feasible) / len(self.cells)

    def rows(self) -> List[Dict]:
        return [cell.to_row() for cell in self.cells]


def theta_grid(steps: int) -> List[float]:
    """`steps` evenly spaced angles covering [-pi, pi)."""
    return np.linspace(-math.pi, math.pi, steps, endpoint=False).tolist()


def _best_over_thetas(
    states: List[FamilyState], thetas: List[float], expression: BellExpression
) -> Tuple[float, float, float]:
    best = (-math.inf, math.nan, math.nan)
    for state in states:
        for theta1, theta2 in itertools.product(thetas, repeat=2):
            s_value = bell_value(state.rho, MeasurementAngles(theta1, theta2), expression)
            if s_value > best[0]:
                best = (s_value, theta1, theta2)
    return best


def scan_cell(
    angles: FamilyAngles,
    config: ScanConfig,
    expression: Optional[BellExpression] = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> ScanCell:
    solutions = solve_omega(angles, tolerances)
    cell = ScanCell(
        alpha=angles.alpha, beta=angles.beta, gamma=angles.gamma,
        coeff_a=solutions.coeffA, coeff_b=solutions.coeffB, coeff_c=solutions.coeffC,
        discriminant=solutions.discriminant, degenerate=solutions.degenerate,
        branches=solutions.branches, valid_branches=(),
    )
    if not solutions.feasible:
        return cell

    valid = valid_branches(angles, tolerances, solutions)
    cell.valid_branches = tuple(index for index, _ in valid)
    if not valid:
        return cell

    cell.certified = all(certify(state, tolerances).passed for _, state in valid)
    if config.with_s:
        # omega + pi copies give identical states
        distinct = []
        for index, state in valid:
            twin = solutions.equivalent_branch(index)
            if twin is None or twin not in cell.valid_branches or twin > index:
                distinct.append(state)
        s_value, theta1, theta2 = _best_over_thetas(
            distinct, theta_grid(config.theta_steps), expression or sliwa5_expression()
        )
        cell.best_s, cell.best_theta1, cell.best_theta2 = s_value, theta1, theta2
    return cell


def scan(
    config: ScanConfig,
    expression: Optional[BellExpression] = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> ScanResult:
    """
    Evaluate every grid cell. Cells are ordered alpha-major, then beta, then
    gamma, regardless of how many workers run them.
    """
    config.validate()
    expression = expression or sliwa5_expression()
    grid = [
        FamilyAngles(a, b, g)
        for a, b, g in itertools.product(config.alpha.values(), config.beta.values(), config.gamma.values())
    ]
    logger.info(f"Scanning {len(grid)} cell(s)")

    if config.max_workers is not None and config.max_workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=config.max_workers) as executor:
            cells = list(executor.map(lambda a: scan_cell(a, config, expression, tolerances), grid))
    else:
        cells = [scan_cell(a, config, expression, tolerances) for a in grid]

    for cell in cells:
        logger.debug(
            f"Cell ({cell.alpha:.6f}, {cell.beta:.6f}, {cell.gamma:.6f}): "
            f"{len(cell.branches)} branch(es), valid {list(cell.valid_branches)}"
        )
    result = ScanResult(config=config, cells=cells)
    logger.info(f"Scan done: {result.feasible_fraction:.1%} of cells feasible")
    return result
