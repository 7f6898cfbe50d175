"""
Multi-start derivative-free maximization of the Bell value over the family.

The search space is (alpha, beta, gamma, theta1, theta2); omega is re-solved
at every evaluation and the best valid branch is kept. Infeasible points score
-inf so the simplex can slide along the feasibility boundary.

Key Features:
- One private random.Random per start, seeded with seed + start_index
- Starts run in a thread pool and merge in start-index order
- Per-start convergence history with a non-decreasing incumbent
- Ties between starts broken lexicographically on the parameters
"""

import concurrent.futures
import logging
import math
import os
import random
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from core.config import DEFAULT_TOLERANCES, SearchConfig, Tolerances
from core.engine.bell_engine import BellExpression, MeasurementAngles, bell_value, sliwa5_expression
from core.engine.state_family import (
    CertificationRecord,
    FamilyAngles,
    FamilyError,
    InfeasibleError,
    InvalidWeightsError,
    SingularSystemError,
    Weights,
    assemble_state,
    certify,
    require_branches,
)

logger = logging.getLogger(__name__)

Parameters = Tuple[float, float, float, float, float]

TWO_PI = 2 * math.pi
SOUNDNESS_TOLERANCE = 1e-12


class NoFeasiblePointError(Exception):
    """Every start of a search stayed infeasible."""
    pass


@dataclass
class SearchPoint:
    """One evaluation of the objective"""
    alpha: float
    beta: float
    gamma: float
    theta1: float
    theta2: float
    s_value: float = -math.inf
    branch: Optional[int] = None
    omega: Optional[float] = None
    weights: Optional[Weights] = None
    infeasible_reason: Optional[str] = None

    @property
    def feasible(self) -> bool:
        return math.isfinite(self.s_value)

    @property
    def parameters(self) -> Parameters:
        return (self.alpha, self.beta, self.gamma, self.theta1, self.theta2)

    @property
    def angles(self) -> FamilyAngles:
        return FamilyAngles(self.alpha, self.beta, self.gamma)

    @property
    def measurement(self) -> MeasurementAngles:
        return MeasurementAngles(self.theta1, self.theta2)

    def to_dict(self) -> Dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "gamma": self.gamma,
            "theta1": self.theta1,
            "theta2": self.theta2,
            "branch": self.branch,
            "omega": self.omega,
            "s_value": self.s_value if self.feasible else None,
            "weights": self.weights.to_dict() if self.weights is not None else None,
            "feasible": self.feasible,
            "infeasible_reason": self.infeasible_reason,
        }


def evaluate_point(
    params: Sequence[float],
    expression: Optional[BellExpression] = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> SearchPoint:
    """
    Assemble every valid omega branch at these angles and keep the one with
    the largest Bell value. Construction failures become an infeasible point.
    """
    alpha, beta, gamma, theta1, theta2 = (float(p) for p in params)
    point = SearchPoint(alpha, beta, gamma, theta1, theta2)
    if not all(math.isfinite(p) for p in point.parameters):
        point.infeasible_reason = "non_finite"
        return point

    expression = expression or _SLIWA5
    angles = point.angles
    measurement = point.measurement
    try:
        solutions = require_branches(angles, tolerances)
    except InfeasibleError as e:
        point.infeasible_reason = e.reason
        return point

    evaluated = set()
    for index, omega in enumerate(solutions.branches):
        twin = solutions.equivalent_branch(index)
        # omega and omega + pi give the same state
        if twin is not None and twin in evaluated:
            continue
        evaluated.add(index)
        try:
            state = assemble_state(angles, omega, tolerances)
        except (SingularSystemError, InvalidWeightsError):
            continue
        s_value = bell_value(state.rho, measurement, expression)
        if s_value > point.s_value:
            point.s_value = s_value
            point.branch = index
            point.omega = omega
            point.weights = state.weights

    if not point.feasible:
        point.infeasible_reason = "negative_weights"
    return point


def objective(
    params: Sequence[float],
    expression: Optional[BellExpression] = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> float:
    """Best Bell value over valid branches; -inf marks an infeasible point."""
    return evaluate_point(params, expression, tolerances).s_value


@dataclass
class HistoryRow:
    start_index: int
    run: int  # 0 for the first simplex, then one per restart
    iteration: int
    incumbent: float
    parameters: Parameters

    def to_dict(self) -> Dict:
        alpha, beta, gamma, theta1, theta2 = self.parameters
        return {
            "start_index": self.start_index,
            "run": self.run,
            "iteration": self.iteration,
            "s_value": self.incumbent,
            "alpha": alpha,
            "beta": beta,
            "gamma": gamma,
            "theta1": theta1,
            "theta2": theta2,
        }


HISTORY_COLUMNS = ["start_index", "run", "iteration", "s_value", "alpha", "beta", "gamma", "theta1", "theta2"]


@dataclass
class StartResult:
    """Result from a single start"""
    start_index: int
    seed: int
    start_point: Optional[Parameters]
    best: SearchPoint
    iterations: int
    converged: bool
    execution_time_ms: float
    draws: int = 0
    history: List[HistoryRow] = field(default_factory=list)
    error_message: Optional[str] = None


@dataclass
class SearchStats:
    """Aggregated statistics from a multi-start run"""
    total_starts: int
    feasible_starts: int
    converged_starts: int
    best_s: float
    total_execution_time_ms: float
    avg_execution_time_ms: float

    def to_dict(self) -> Dict:
        return {
            "total_starts": self.total_starts,
            "feasible_starts": self.feasible_starts,
            "converged_starts": self.converged_starts,
            "best_s": self.best_s,
            "total_execution_time_ms": self.total_execution_time_ms,
            "avg_execution_time_ms": self.avg_execution_time_ms,
        }


@dataclass
class SearchResult:
    seed: int
    best: SearchPoint
    certification: CertificationRecord
    starts: List[StartResult]
    stats: SearchStats

    def history_rows(self) -> List[HistoryRow]:
        rows: List[HistoryRow] = []
        for start in self.starts:
            rows.extend(start.history)
        return rows


class _TrackedObjective:
    """Negated objective for scipy, remembering the best point it has seen."""

    def __init__(self, expression: BellExpression, tolerances: Tolerances, incumbent: float = -math.inf,
                 incumbent_x: Optional[np.ndarray] = None):
        self.expression = expression
        self.tolerances = tolerances
        self.best_value = incumbent
        self.best_x = incumbent_x
        self.evaluations = 0

    def __call__(self, x: np.ndarray) -> float:
        self.evaluations += 1
        value = objective(x, self.expression, self.tolerances)
        if value > self.best_value:
            self.best_value = value
            self.best_x = np.array(x, dtype=float)
        return -value if math.isfinite(value) else math.inf


class MultiStartOptimizer:
    """
    Runs independent Nelder-Mead searches from many starts and reduces them
    to a single best point.
    """

    def __init__(self, config: SearchConfig, expression: Optional[BellExpression] = None,
                 tolerances: Tolerances = DEFAULT_TOLERANCES):
        config.validate()
        self.config = config
        self.expression = expression or _SLIWA5
        self.tolerances = tolerances
        self.max_workers = config.max_workers or os.cpu_count()

    def _draw_start(self, rng: random.Random) -> Tuple[Optional[Parameters], int]:
        """Uniform over the box, re-drawn until the objective is finite."""
        for draw in range(1, self.config.max_start_draws + 1):
            candidate = (
                rng.uniform(0.0, TWO_PI),
                rng.uniform(0.0, TWO_PI),
                rng.uniform(0.0, TWO_PI),
                rng.uniform(-math.pi, math.pi),
                rng.uniform(-math.pi, math.pi),
            )
            if math.isfinite(objective(candidate, self.expression, self.tolerances)):
                return candidate, draw
        return None, self.config.max_start_draws

    def _initial_simplex(self, x0: np.ndarray) -> np.ndarray:
        simplex = np.tile(x0, (len(x0) + 1, 1))
        for i in range(len(x0)):
            simplex[i + 1, i] += self.config.search_radius
        return simplex

    def _run_single_start(self, start_index: int, seed: int) -> StartResult:
        start_time = time.time()
        draws = 0
        if self.config.start_points is not None:
            start_point = tuple(float(v) for v in self.config.start_points[start_index])
        else:
            rng = random.Random(seed)
            start_point, draws = self._draw_start(rng)

        if start_point is None:
            logger.debug(f"Start {start_index}: no feasible draw in {draws} attempts")
            return StartResult(
                start_index=start_index, seed=seed, start_point=None,
                best=SearchPoint(*(math.nan,) * 5, infeasible_reason="no_feasible_start"),
                iterations=0, converged=False,
                execution_time_ms=(time.time() - start_time) * 1000, draws=draws,
                error_message="no feasible start drawn",
            )

        history: List[HistoryRow] = []
        iterations = 0
        converged = True
        tracked = _TrackedObjective(self.expression, self.tolerances)
        tracked(np.array(start_point))
        history.append(HistoryRow(start_index, 0, 0, tracked.best_value, start_point))

        if self.config.search_radius > 0 and math.isfinite(tracked.best_value):
            x0 = np.array(start_point, dtype=float)
            for run in range(self.config.restarts + 1):
                run_iterations = 0

                def _callback(xk):
                    nonlocal run_iterations
                    run_iterations += 1
                    history.append(HistoryRow(
                        start_index, run, run_iterations, tracked.best_value,
                        tuple(float(v) for v in tracked.best_x),
                    ))

                with np.errstate(invalid='ignore', over='ignore'):
                    result = minimize(
                        tracked, x0, method='Nelder-Mead', callback=_callback,
                        options={
                            'maxiter': self.config.max_iterations,
                            'xatol': self.config.xatol,
                            'fatol': math.inf,  # simplex diameter alone decides
                            'initial_simplex': self._initial_simplex(x0),
                        },
                    )
                iterations += run_iterations
                converged = bool(result.success)
                x0 = np.array(tracked.best_x, dtype=float)

        best = evaluate_point(tracked.best_x if tracked.best_x is not None else start_point,
                              self.expression, self.tolerances)
        execution_time = (time.time() - start_time) * 1000
        logger.debug(
            f"Start {start_index}: S={best.s_value:.10f} after {iterations} iterations "
            f"({tracked.evaluations} evaluations, converged={converged})"
        )
        return StartResult(
            start_index=start_index, seed=seed, start_point=start_point, best=best,
            iterations=iterations, converged=converged, execution_time_ms=execution_time,
            draws=draws, history=history,
            error_message=None if best.feasible else f"infeasible: {best.infeasible_reason}",
        )

    def run_batch(
        self,
        seed: int,
        progress_callback: Optional[Callable[[int, int, StartResult], None]] = None,
    ) -> List[StartResult]:
        """
        Run every start, in parallel, and return the results in start-index order.

        Args:
            seed: Base seed; start i uses seed + i
            progress_callback: Called after each start: (completed, total, result)
        """
        total = self.config.start_count
        results: List[StartResult] = []
        with concurrent.futures.ThreadPoolExecutor(max_workers=self.max_workers) as executor:
            future_to_index = {
                executor.submit(self._run_single_start, i, seed + i): i
                for i in range(total)
            }
            for completed, future in enumerate(concurrent.futures.as_completed(future_to_index), 1):
                result = future.result()
                results.append(result)
                if progress_callback:
                    progress_callback(completed, total, result)
        results.sort(key=lambda r: r.start_index)
        return results

    def maximize(
        self,
        seed: int,
        progress_callback: Optional[Callable[[int, int, StartResult], None]] = None,
    ) -> SearchResult:
        logger.info(f"Maximizing '{self.expression.name}' over {self.config.start_count} start(s), seed {seed}")
        start_time = time.time()
        results = self.run_batch(seed, progress_callback)
        total_time = (time.time() - start_time) * 1000

        feasible = [r for r in results if r.best.feasible]
        if not feasible:
            raise NoFeasiblePointError(f"All {len(results)} start(s) stayed infeasible")

        # max S, ties broken by the lexicographically smallest parameters
        winner = min(feasible, key=lambda r: (-r.best.s_value, r.best.parameters))
        best = winner.best

        fresh = evaluate_point(best.parameters, self.expression, self.tolerances)
        if abs(fresh.s_value - best.s_value) > SOUNDNESS_TOLERANCE:
            logger.warning(f"Best point re-evaluates to {fresh.s_value!r}, logged {best.s_value!r}")
        state = assemble_state(best.angles, best.omega, self.tolerances)
        certification = certify(state, self.tolerances)

        times = [r.execution_time_ms for r in results]
        stats = SearchStats(
            total_starts=len(results),
            feasible_starts=len(feasible),
            converged_starts=sum(1 for r in results if r.converged),
            best_s=best.s_value,
            total_execution_time_ms=total_time,
            avg_execution_time_ms=sum(times) / len(times),
        )
        logger.info(
            f"Best S = {best.s_value:.10f} from start {winner.start_index} "
            f"({stats.feasible_starts}/{stats.total_starts} feasible starts)"
        )
        return SearchResult(seed=seed, best=best, certification=certification, starts=results, stats=stats)


def maximize(
    config: SearchConfig,
    seed: int,
    expression: Optional[BellExpression] = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    progress_callback: Optional[Callable[[int, int, StartResult], None]] = None,
) -> SearchResult:
    return MultiStartOptimizer(config, expression, tolerances).maximize(seed, progress_callback)


_SLIWA5 = sliwa5_expression()
