"""
Feasibility scan tests.

Tests cover:
- the grid cell at (pi/12, pi/4, 5pi/12) is feasible and certifies
- degenerate cells (A = B = C = 0) carry no branches
- feasible fraction on a mixed grid
- best S over a theta grid
- identical rows from threaded and sequential scans
"""

import math

import pytest

from core.config import AxisRange, ScanConfig
from core.engine.state_family import FamilyAngles
from core.search.scan import SCAN_COLUMNS, scan, scan_cell, theta_grid


def small_grid(**kwargs):
    return ScanConfig(
        alpha=AxisRange(0.0, math.pi / 6, 3),
        beta=AxisRange(0.0, math.pi / 2, 3),
        gamma=AxisRange(math.pi / 3, math.pi / 2, 3),
        **kwargs,
    )


def find_cell(result, alpha, beta, gamma):
    for cell in result.cells:
        if (math.isclose(cell.alpha, alpha, abs_tol=1e-12)
                and math.isclose(cell.beta, beta, abs_tol=1e-12)
                and math.isclose(cell.gamma, gamma, abs_tol=1e-12)):
            return cell
    raise AssertionError(f"no cell at ({alpha}, {beta}, {gamma})")


def test_grid_contains_main_point_and_it_is_feasible():
    result = scan(small_grid())
    assert len(result.cells) == 27
    cell = find_cell(result, math.pi / 12, math.pi / 4, 5 * math.pi / 12)
    assert cell.discriminant > 0
    assert len(cell.branches) == 4
    assert len(cell.valid_branches) == 2
    assert cell.feasible
    assert cell.certified is True
    print(f"\n✅ {result.feasible_fraction:.1%} of {len(result.cells)} cells feasible")


def test_cells_are_alpha_major():
    result = scan(small_grid())
    keys = [(c.alpha, c.beta, c.gamma) for c in result.cells]
    assert keys == sorted(keys)


def test_degenerate_cells_are_flagged():
    result = scan(small_grid())
    for alpha in (0.0, math.pi / 12, math.pi / 6):
        assert find_cell(result, alpha, math.pi / 2, math.pi / 2).degenerate

    degenerate = [c for c in result.cells if c.degenerate]
    for cell in degenerate:
        assert max(abs(cell.coeff_a), abs(cell.coeff_b), abs(cell.coeff_c)) < 1e-12
        assert cell.branches == ()
        assert not cell.feasible
        assert cell.certified is None


def test_feasible_fraction_strictly_between_zero_and_one():
    config = ScanConfig(
        alpha=AxisRange(math.pi / 12, math.pi / 4, 2),
        beta=AxisRange(math.pi / 4, math.pi / 3, 2),
        gamma=AxisRange(5 * math.pi / 12, 3 * math.pi / 4, 2),
    )
    result = scan(config)
    assert len(result.cells) == config.cell_count == 8
    assert 0.0 < result.feasible_fraction < 1.0

    infeasible = find_cell(result, math.pi / 4, math.pi / 3, 3 * math.pi / 4)
    assert infeasible.discriminant < 0
    assert infeasible.to_row()["branch_count"] == 0
    assert infeasible.certified is None


def test_best_s_over_theta_grid():
    config = small_grid(with_s=True, theta_steps=18)
    cell = scan_cell(FamilyAngles(math.pi / 12, math.pi / 4, 5 * math.pi / 12), config)
    assert cell.best_s is not None
    # 2pi/9 and -4pi/9 both lie on the 18-step grid
    assert cell.best_s >= 3.0069 - 1e-3
    assert cell.best_theta1 in theta_grid(18)
    assert cell.best_theta2 in theta_grid(18)


def test_best_s_skipped_without_flag():
    cell = scan_cell(FamilyAngles(math.pi / 12, math.pi / 4, 5 * math.pi / 12), small_grid())
    assert cell.best_s is None
    assert cell.to_row()["best_theta1"] is None


def test_theta_grid():
    assert theta_grid(4) == pytest.approx([-math.pi, -math.pi / 2, 0.0, math.pi / 2])


def test_rows_follow_column_order():
    for row in scan(small_grid()).rows():
        assert list(row) == SCAN_COLUMNS


def test_threaded_scan_matches_sequential():
    sequential = scan(small_grid())
    threaded = scan(small_grid(max_workers=4))
    assert sequential.rows() == threaded.rows()
