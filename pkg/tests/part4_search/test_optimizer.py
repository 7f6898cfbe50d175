"""
Multi-start optimizer tests.

Verifies the objective at the published points, determinism across runs,
monotone convergence history and the no-feasible-point signal.
"""

import math

import pytest

from core.config import SearchConfig
from core.engine.bell_engine import BellExpression
from core.search.optimizer import (
    MultiStartOptimizer,
    NoFeasiblePointError,
    evaluate_point,
    maximize,
    objective,
)

MAIN_POINT = (math.pi / 12, math.pi / 4, 5 * math.pi / 12, 2 * math.pi / 9, -4 * math.pi / 9)
APPENDIX_POINT = (0.1545, 0.8460, 4.4903, 0.6897, -1.2956)
INFEASIBLE_POINT = (math.pi / 4, math.pi / 3, 3 * math.pi / 4, 0.1, 0.2)


def test_objective_main_point():
    assert objective(MAIN_POINT) == pytest.approx(3.0069, abs=1e-3)


def test_objective_appendix_point():
    assert objective(APPENDIX_POINT) == pytest.approx(3.0187, abs=1e-3)


def test_objective_infeasible_point():
    point = evaluate_point(INFEASIBLE_POINT)
    assert objective(INFEASIBLE_POINT) == -math.inf
    assert not point.feasible
    assert point.infeasible_reason == "discriminant"
    assert point.branch is None


def test_degenerate_point_is_infeasible():
    point = evaluate_point((0.3, math.pi / 2, math.pi / 2, 0.0, 0.0))
    assert point.infeasible_reason == "degenerate"


def test_non_finite_parameters_are_infeasible():
    point = evaluate_point((math.nan, 0.1, 0.2, 0.3, 0.4))
    assert point.infeasible_reason == "non_finite"


def test_evaluate_point_reports_branch_and_weights():
    point = evaluate_point(MAIN_POINT)
    assert point.feasible
    assert point.omega == pytest.approx(0.5682, abs=1e-3)
    assert point.weights.p1 == pytest.approx(0.0636, abs=1e-3)
    assert point.branch is not None
    data = point.to_dict()
    assert data["feasible"] is True
    assert data["s_value"] == point.s_value


def test_custom_expression_objective():
    single = BellExpression(terms={(1, 0, 0): 1}, name="a1")
    value = objective(MAIN_POINT, single)
    assert -1.0 <= value <= 1.0


def test_zero_radius_returns_start_unchanged():
    config = SearchConfig(start_points=[MAIN_POINT], search_radius=0.0)
    result = maximize(config, seed=0)
    assert result.best.parameters == MAIN_POINT
    assert result.best.s_value == objective(MAIN_POINT)
    assert result.best.s_value == pytest.approx(3.0069, abs=1e-3)
    assert result.certification.passed
    assert result.stats.total_starts == 1


def test_zero_radius_infeasible_start():
    config = SearchConfig(start_points=[INFEASIBLE_POINT], search_radius=0.0)
    with pytest.raises(NoFeasiblePointError):
        maximize(config, seed=0)


def test_local_search_improves_main_point():
    config = SearchConfig(start_points=[MAIN_POINT], max_iterations=200, restarts=0)
    result = maximize(config, seed=0)
    assert result.best.s_value >= objective(MAIN_POINT)
    assert result.best.weights.min_weight() >= -1e-10
    assert result.certification.passed


def test_history_is_monotone():
    config = SearchConfig(starts=3, max_iterations=80, restarts=1)
    result = maximize(config, seed=11)
    for start in result.starts:
        incumbents = [row.incumbent for row in start.history]
        assert incumbents, f"start {start.start_index} has no history"
        assert all(b >= a for a, b in zip(incumbents, incumbents[1:]))
        assert incumbents[-1] == pytest.approx(start.best.s_value, abs=1e-12)
    # merged in start-index order
    indices = [row.start_index for row in result.history_rows()]
    assert indices == sorted(indices)


def test_determinism_across_runs_and_worker_counts():
    first = maximize(SearchConfig(starts=4, max_iterations=60, max_workers=1), seed=123)
    second = maximize(SearchConfig(starts=4, max_iterations=60, max_workers=4), seed=123)
    assert first.best.parameters == second.best.parameters
    assert first.best.s_value == second.best.s_value
    assert [s.start_point for s in first.starts] == [s.start_point for s in second.starts]


def test_seeds_are_offset_per_start():
    result = maximize(SearchConfig(starts=3, max_iterations=5), seed=40)
    assert [s.seed for s in result.starts] == [40, 41, 42]
    assert len({s.start_point for s in result.starts}) == 3


def test_best_point_is_sound():
    result = maximize(SearchConfig(starts=2, max_iterations=100), seed=5)
    fresh = evaluate_point(result.best.parameters)
    assert abs(fresh.s_value - result.best.s_value) <= 1e-12
    assert result.certification.passed
    assert result.best.weights.min_weight() >= -1e-10


def test_progress_callback():
    calls = []
    optimizer = MultiStartOptimizer(SearchConfig(starts=2, max_iterations=5))
    optimizer.maximize(seed=1, progress_callback=lambda done, total, r: calls.append((done, total)))
    assert sorted(calls) == [(1, 2), (2, 2)]


@pytest.mark.slow
def test_hundred_starts_reach_the_family_optimum():
    result = maximize(SearchConfig(starts=100), seed=2024)
    print(f"\n✅ best S = {result.best.s_value:.6f} at {result.best.parameters}")
    print(f"   {result.stats.feasible_starts}/{result.stats.total_starts} feasible starts, "
          f"{result.stats.total_execution_time_ms / 1000:.1f} s")
    assert result.best.s_value >= 3.018
    assert result.certification.passed
