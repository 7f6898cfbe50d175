"""
Linear algebra kernel tests: basis convention, tensor products and
adjoints, partial transposition, party permutations and the Hermitian eigensolver.
"""

import itertools

import numpy as np
import pytest

from core.config import Tolerances
from core.engine.linalg_core import (
    DIM,
    IDENTITY_2,
    SIGMA_X,
    SIGMA_Z,
    ContractViolation,
    DimensionError,
    Party,
    dagger,
    eig_hermitian,
    kron,
    kron_all,
    ket_from_amplitudes,
    min_eigenvalue,
    partial_transpose,
    permute_parties,
    projector,
)
from core.engine.state_family import ghz_state


def basis_operator(row: str, col: str) -> np.ndarray:
    m = np.zeros((DIM, DIM), dtype=complex)
    m[int(row, 2), int(col, 2)] = 1.0
    return m


def random_density_matrix(rng) -> np.ndarray:
    g = rng.normal(size=(DIM, DIM)) + 1j * rng.normal(size=(DIM, DIM))
    rho = g @ dagger(g)
    return rho / np.trace(rho)


def test_kron_basis_convention():
    """Party A is the most significant bit: sz on A flips the sign of |1yz>."""
    op = kron_all([SIGMA_Z, IDENTITY_2, IDENTITY_2])
    assert np.allclose(np.diag(op), [1, 1, 1, 1, -1, -1, -1, -1])
    op = kron_all([IDENTITY_2, IDENTITY_2, SIGMA_Z])
    assert np.allclose(np.diag(op), [1, -1, 1, -1, 1, -1, 1, -1])


def test_kron_entry_layout():
    a = np.array([[1, 2], [3, 4]])
    b = np.array([[0, 5], [6, 7]])
    k = kron(a, b)
    assert k[1 * 2 + 0, 0 * 2 + 1] == 3 * 5


def test_kron_is_associative():
    rng = np.random.default_rng(5)
    a, b, c = (rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)) for _ in range(3))
    assert np.allclose(kron(kron(a, b), c), kron(a, kron(b, c)))
    assert np.allclose(kron_all([a, b, c]), kron(a, kron(b, c)))


def test_kron_known_products():
    assert np.array_equal(kron(IDENTITY_2, IDENTITY_2), np.eye(4))
    assert np.array_equal(kron(SIGMA_Z, SIGMA_Z), np.diag([1, -1, -1, 1]))


def test_dagger():
    rng = np.random.default_rng(6)
    m = rng.normal(size=(DIM, DIM)) + 1j * rng.normal(size=(DIM, DIM))
    assert np.array_equal(dagger(dagger(m)), m)
    assert np.array_equal(dagger(1j * np.eye(2)), -1j * np.eye(2))


def test_ket_from_amplitudes():
    ket = ket_from_amplitudes({'011': 0.6, '100': 0.8})
    assert ket[3] == 0.6
    assert ket[4] == 0.8
    assert np.isclose(np.linalg.norm(ket), 1.0)


@pytest.mark.parametrize("party, row, col", [
    (Party.A, '000', '100'),
    (Party.B, '000', '010'),
    (Party.C, '000', '001'),
])
def test_partial_transpose_moves_single_party_index(party, row, col):
    rho = basis_operator(row, col)
    pt = partial_transpose(rho, party)
    assert pt[int(col, 2), int(row, 2)] == 1.0
    assert np.count_nonzero(pt) == 1


def test_partial_transpose_leaves_other_parties_alone():
    # |0 1 0><1 0 0|: PT_C does nothing because C is 0 on both sides
    rho = basis_operator('010', '100')
    assert np.array_equal(partial_transpose(rho, 'C'), rho)
    # PT_A swaps only the first bit: |1 1 0><0 0 0|
    assert partial_transpose(rho, 'A')[int('110', 2), int('000', 2)] == 1.0


def test_partial_transpose_is_an_involution():
    rng = np.random.default_rng(1)
    rho = random_density_matrix(rng)
    for party in Party:
        assert np.allclose(partial_transpose(partial_transpose(rho, party), party), rho)


def test_partial_transpose_preserves_trace_and_hermiticity():
    rng = np.random.default_rng(2)
    rho = random_density_matrix(rng)
    for party in Party:
        pt = partial_transpose(rho, party)
        assert np.isclose(np.trace(pt), 1.0)
        assert np.allclose(pt, dagger(pt))


def test_partial_transpose_rejects_wrong_dimension():
    with pytest.raises(DimensionError):
        partial_transpose(np.eye(4), Party.A)


def test_ghz_partial_transpose_has_negative_eigenvalue():
    rho = ghz_state()
    for party in Party:
        assert min_eigenvalue(partial_transpose(rho, party)) == pytest.approx(-0.5, abs=1e-12)


def test_permute_parties_swap_a_and_c():
    rho = basis_operator('001', '001')
    swapped = permute_parties(rho, (Party.C, Party.B, Party.A))
    assert swapped[int('100', 2), int('100', 2)] == 1.0
    assert np.count_nonzero(swapped) == 1


def test_permute_parties_cycle_matches_operator_conjugation():
    rng = np.random.default_rng(3)
    ops = [rng.normal(size=(2, 2)) for _ in range(3)]
    rho = kron_all(ops)
    # slot i receives the factor that sat at party perm[i]
    permuted = permute_parties(rho, ('B', 'C', 'A'))
    assert np.allclose(permuted, kron_all([ops[1], ops[2], ops[0]]))


def test_identity_permutation_is_a_no_op():
    rng = np.random.default_rng(7)
    rho = random_density_matrix(rng)
    assert np.allclose(permute_parties(rho, (Party.A, Party.B, Party.C)), rho)


def test_permutations_preserve_trace_hermiticity_and_spectrum():
    rng = np.random.default_rng(8)
    rho = random_density_matrix(rng)
    spectrum = eig_hermitian(rho).values
    for perm in itertools.permutations(Party):
        permuted = permute_parties(rho, perm)
        assert np.isclose(np.trace(permuted), 1.0)
        assert np.allclose(permuted, dagger(permuted))
        assert np.allclose(eig_hermitian(permuted).values, spectrum)


def test_permute_parties_rejects_non_permutation():
    with pytest.raises(ValueError):
        permute_parties(np.eye(DIM), ('A', 'A', 'B'))


def test_party_parse():
    assert Party.parse('b') is Party.B
    assert Party.parse(2) is Party.C
    with pytest.raises(ValueError):
        Party.parse('D')


def test_eig_hermitian_reconstructs_matrix():
    rng = np.random.default_rng(4)
    rho = random_density_matrix(rng)
    values, vectors = eig_hermitian(rho)
    assert np.all(np.diff(values) >= 0)
    assert np.allclose(vectors @ np.diag(values) @ dagger(vectors), rho)
    assert np.allclose(dagger(vectors) @ vectors, np.eye(DIM))


def test_eig_hermitian_pauli_spectrum():
    values, _ = eig_hermitian(SIGMA_X)
    assert np.allclose(values, [-1.0, 1.0])


def test_eig_hermitian_sorted_values_sum_to_trace():
    values, _ = eig_hermitian(np.diag([3.0, 1.0, 2.0]).astype(complex))
    assert np.allclose(values, [1.0, 2.0, 3.0])
    rng = np.random.default_rng(9)
    for _ in range(5):
        g = rng.normal(size=(DIM, DIM)) + 1j * rng.normal(size=(DIM, DIM))
        h = g + dagger(g)
        assert np.isclose(np.sum(eig_hermitian(h).values), np.trace(h).real)


def test_eig_hermitian_rejects_non_hermitian():
    m = np.array([[0, 1], [0, 0]], dtype=complex)
    with pytest.raises(ContractViolation):
        eig_hermitian(m)


def test_eig_hermitian_tolerance_is_configurable():
    m = np.array([[1, 1e-8], [0, 1]], dtype=complex)
    with pytest.raises(ContractViolation):
        eig_hermitian(m)
    values, _ = eig_hermitian(m, Tolerances(hermiticity=1e-6))
    assert np.allclose(values, [1.0 - 5e-9, 1.0 + 5e-9])


def test_projector_is_rank_one():
    ket = ket_from_amplitudes({'000': 1 / np.sqrt(2), '111': 1 / np.sqrt(2)})
    p = projector(ket)
    assert np.allclose(p @ p, p)
    assert np.isclose(np.trace(p), 1.0)
