"""
Bell engine tests: the built-in expression, local bound enumeration,
correlators on reference states, and the probability table.
"""

import itertools
import math
import time

import numpy as np
import pytest

from core.engine.bell_engine import (
    ALL_MONOMIALS,
    BellExpression,
    CorrelationTensor,
    MeasurementAngles,
    all_strategies,
    bell_value,
    correlation_tensor,
    correlator_by_trace,
    correlators_from_distribution,
    evaluate,
    local_bound,
    monomial_label,
    no_signaling_residual,
    normalization_residual,
    observable,
    probability_distribution,
    sliwa5_expression,
    strategy_label,
    strategy_value,
    symmetrize,
)
from core.engine.linalg_core import ContractViolation, ket_from_amplitudes, projector
from core.engine.state_family import FamilyAngles, assemble_state, ghz_state, maximally_mixed_state, solve_omega

MAIN_ANGLES = FamilyAngles(math.pi / 12, math.pi / 4, 5 * math.pi / 12)
MAIN_MEASUREMENT = MeasurementAngles(2 * math.pi / 9, -4 * math.pi / 9)
APPENDIX_ANGLES = FamilyAngles(0.1545, 0.8460, 4.4903)
APPENDIX_MEASUREMENT = MeasurementAngles(0.6897, -1.2956)


def state_near(angles, omega):
    branches = solve_omega(angles).branches
    return assemble_state(angles, min(branches, key=lambda w: abs(w - omega)))


@pytest.fixture(scope="module")
def main_state():
    return state_near(MAIN_ANGLES, 0.5682)


@pytest.fixture(scope="module")
def appendix_state():
    return state_near(APPENDIX_ANGLES, 0.4808)


def test_sliwa5_has_seventeen_terms():
    expr = sliwa5_expression()
    assert len(expr.terms) == 17
    assert expr.algebraic_maximum() == 17
    assert expr.terms[(1, 0, 0)] == 1
    assert expr.terms[(0, 2, 1)] == 1
    assert expr.terms[(2, 2, 0)] == -1
    assert expr.terms[(1, 1, 1)] == -1
    assert expr.terms[(1, 2, 1)] == -1
    assert expr.terms[(2, 2, 2)] == 1


def test_symmetrize_counts_each_monomial_once():
    assert symmetrize((1, 0, 0)) == [(0, 0, 1), (0, 1, 0), (1, 0, 0)]
    assert len(symmetrize((1, 2, 0))) == 6
    assert symmetrize((1, 1, 1)) == [(1, 1, 1)]


def test_monomial_label():
    assert monomial_label((1, 2, 0)) == "A1B2"
    assert monomial_label((0, 0, 2)) == "C2"


def test_invalid_monomial_rejected():
    with pytest.raises(ValueError):
        BellExpression(terms={(0, 0, 0): 1})
    with pytest.raises(ValueError):
        BellExpression(terms={(3, 0, 0): 1})


def test_local_bound_is_three():
    start = time.perf_counter()
    result = local_bound(sliwa5_expression())
    elapsed = time.perf_counter() - start
    assert result.bound == 3
    assert result.strategies
    for strategy in result.strategies:
        assert strategy_value(sliwa5_expression(), strategy) == 3
    print(f"\n✅ local bound 3 by {len(result.strategies)} strategies in {elapsed * 1000:.2f} ms")
    assert elapsed < 0.01


def test_all_strategies_enumerated():
    strategies = all_strategies()
    assert len(strategies) == 64
    assert len(set(strategies)) == 64


def test_all_plus_one_strategy():
    # every correlator is +1: 3 + 6 - 3 - 1 - 3 + 1
    strategy = ((1, 1), (1, 1), (1, 1))
    assert strategy_value(sliwa5_expression(), strategy) == 3
    assert strategy_label(strategy) == "A1=+1 A2=+1 B1=+1 B2=+1 C1=+1 C2=+1"


def test_single_term_bound():
    assert local_bound(BellExpression(terms={(1, 0, 0): 1})).bound == 1


def test_negated_bound_matches_enumeration():
    expr = sliwa5_expression()
    negated = expr.negated()
    expected = max(-strategy_value(expr, s) for s in all_strategies())
    assert local_bound(negated).bound == expected
    assert negated.name == "-sliwa5"


def test_coefficient_tensor_matches_terms():
    expr = sliwa5_expression()
    tensor = expr.coefficient_tensor()
    assert tensor[0, 0, 0] == 0
    assert np.sum(np.abs(tensor)) == 17
    for monomial, coefficient in expr.terms.items():
        assert tensor[monomial] == coefficient


def test_observable_is_dichotomic():
    for theta in (0.0, 0.3, -1.2):
        a = observable(theta)
        assert np.allclose(a @ a, np.eye(2))
        assert np.allclose(np.linalg.eigvalsh(a), [-1.0, 1.0])


def test_main_point_violation(main_state):
    s_value = bell_value(main_state.rho, MAIN_MEASUREMENT, sliwa5_expression())
    assert s_value == pytest.approx(3.0069, abs=1e-3)
    assert s_value > 3 + 1e-9


def test_main_point_runs_under_a_second():
    start = time.perf_counter()
    state = state_near(MAIN_ANGLES, 0.5682)
    s_value = bell_value(state.rho, MAIN_MEASUREMENT, sliwa5_expression())
    elapsed = time.perf_counter() - start
    assert s_value > 3
    print(f"\n✅ state and S = {s_value:.4f} in {elapsed * 1000:.2f} ms")
    assert elapsed < 1.0


def test_appendix_point_violation(appendix_state):
    s_value = bell_value(appendix_state.rho, APPENDIX_MEASUREMENT, sliwa5_expression())
    assert s_value == pytest.approx(3.0187, abs=1e-3)


def test_sigma_z_measurements_do_not_violate(main_state):
    s_value = bell_value(main_state.rho, MeasurementAngles(0.0, 0.0), sliwa5_expression())
    assert s_value <= 3 + 1e-9


def test_fast_correlators_match_trace_path(main_state):
    tensor = correlation_tensor(main_state.rho, MAIN_MEASUREMENT)
    for monomial in ALL_MONOMIALS:
        assert tensor[monomial] == pytest.approx(
            correlator_by_trace(main_state.rho, MAIN_MEASUREMENT, monomial), abs=1e-12
        )


def test_correlators_of_reference_states():
    angles = MeasurementAngles(0.0, math.pi / 2)
    mixed = correlation_tensor(maximally_mixed_state(), angles)
    assert all(abs(v) < 1e-15 for _, v in mixed.items())
    assert evaluate(sliwa5_expression(), mixed) == pytest.approx(0.0, abs=1e-15)

    ghz = correlation_tensor(ghz_state(), angles)
    assert ghz[(1, 0, 0)] == pytest.approx(0.0, abs=1e-15)
    assert ghz[(1, 1, 0)] == pytest.approx(1.0)
    assert ghz[(1, 1, 1)] == pytest.approx(0.0, abs=1e-15)
    assert ghz[(2, 2, 2)] == pytest.approx(1.0)  # <XXX> = 1


def test_correlation_tensor_rejects_missing_monomial():
    tensor = CorrelationTensor(np.zeros((3, 3, 3)), monomials=[(1, 0, 0)])
    assert (1, 0, 0) in tensor
    assert tensor[(1, 0, 0)] == 0.0
    with pytest.raises(ContractViolation):
        tensor[(2, 0, 0)]
    with pytest.raises(ContractViolation):
        evaluate(sliwa5_expression(), tensor)


def test_correlation_tensor_rejects_non_hermitian():
    rho = np.zeros((8, 8), dtype=complex)
    rho[0, 7] = 1j
    with pytest.raises(ContractViolation):
        correlation_tensor(rho, MeasurementAngles(math.pi / 2, math.pi / 2))


def test_correlation_tensor_to_dict():
    tensor = correlation_tensor(ghz_state(), MeasurementAngles(0.0, math.pi / 2))
    data = tensor.to_dict()
    assert len(data) == 26
    assert data["A1B1"] == pytest.approx(1.0)


class TestProbabilityTable:
    """Correlators recomputed from p(abc|xyz) must agree with the direct path."""

    @pytest.mark.parametrize("which", ["main", "appendix"])
    def test_table_consistency(self, which, main_state, appendix_state):
        state, measurement = {
            "main": (main_state, MAIN_MEASUREMENT),
            "appendix": (appendix_state, APPENDIX_MEASUREMENT),
        }[which]
        table = probability_distribution(state.rho, measurement)
        assert table.shape == (2, 2, 2, 2, 2, 2)
        assert np.all(table >= -1e-12)
        assert normalization_residual(table) <= 1e-10
        assert no_signaling_residual(table) <= 1e-10

        direct = correlation_tensor(state.rho, measurement)
        recomputed = correlators_from_distribution(table)
        for monomial in ALL_MONOMIALS:
            assert recomputed[monomial] == pytest.approx(direct[monomial], abs=1e-10)

    def test_ghz_outcomes_are_perfectly_correlated(self):
        table = probability_distribution(ghz_state(), MeasurementAngles(0.0, 0.0))
        assert table[0, 0, 0, 0, 0, 0] == pytest.approx(0.5)
        assert table[0, 0, 0, 1, 1, 1] == pytest.approx(0.5)
        assert table[0, 0, 0, 0, 1, 0] == pytest.approx(0.0)


def test_trivial_bounds():
    assert local_bound(BellExpression(terms={})).bound == 0
    assert local_bound(BellExpression(terms={(1, 1, 1): 1})).bound == 1


def test_observable_special_angles():
    assert np.allclose(observable(0.0), np.diag([1.0, -1.0]))
    assert np.allclose(observable(math.pi / 2), np.array([[0.0, 1.0], [1.0, 0.0]]))


def test_observable_involution_random_angles():
    rng = np.random.default_rng(3)
    for theta in rng.uniform(-math.pi, math.pi, size=1000):
        a = observable(theta)
        assert np.max(np.abs(a @ a - np.eye(2))) <= 1e-14
        assert abs(np.trace(a)) <= 1e-14


def test_product_state_setting_one_correlators():
    rho = projector(ket_from_amplitudes({'000': 1.0}))
    tensor = correlation_tensor(rho, MeasurementAngles(0.0, 1.1))
    for monomial in ALL_MONOMIALS:
        if set(monomial) <= {0, 1}:
            assert tensor[monomial] == pytest.approx(1.0, abs=1e-12)


def test_sigma_z_product_states_stay_local():
    # with theta1 = theta2 = 0 each basis state realizes a deterministic strategy
    expr = sliwa5_expression()
    for bits in itertools.product('01', repeat=3):
        rho = projector(ket_from_amplitudes({''.join(bits): 1.0}))
        assert bell_value(rho, MeasurementAngles(0.0, 0.0), expr) <= 3 + 1e-12


def test_symmetric_state_collapses_permuted_monomials(main_state):
    tensor = correlation_tensor(main_state.rho, MAIN_MEASUREMENT)
    for monomial in ALL_MONOMIALS:
        for permuted in itertools.permutations(monomial):
            assert tensor[permuted] == pytest.approx(tensor[monomial], abs=1e-10)


def test_values_within_algebraic_maximum():
    rng = np.random.default_rng(17)
    expr = sliwa5_expression()
    for _ in range(50):
        g = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
        rho = g @ g.conj().T
        rho /= np.trace(rho).real
        angles = MeasurementAngles(*rng.uniform(-math.pi, math.pi, size=2))
        assert abs(bell_value(rho, angles, expr)) <= expr.algebraic_maximum()


def test_local_bound_invariant_under_outcome_relabeling():
    # flipping every outcome of party A negates each term that involves A
    expr = sliwa5_expression()
    flipped = BellExpression(terms={m: (-c if m[0] else c) for m, c in expr.terms.items()})
    assert local_bound(flipped).bound == local_bound(expr).bound
    assert len(local_bound(flipped).strategies) == len(local_bound(expr).strategies)
