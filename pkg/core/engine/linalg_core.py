# core/engine/linalg_core.py
#
# Dense complex linear algebra for three qubits. Basis convention: |xyz> sits
# at index 4x + 2y + z, party A is the most significant bit.

import logging
from enum import IntEnum
from functools import reduce
from typing import Iterable, NamedTuple, Sequence, Union

import numpy as np

from core.config import DEFAULT_TOLERANCES, Tolerances

logger = logging.getLogger(__name__)

# Aliases used in signatures across the package
ComplexMatrix = np.ndarray
DensityMatrix = np.ndarray
Ket = np.ndarray

N_QUBITS = 3
DIM = 2 ** N_QUBITS

IDENTITY_2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)


class DimensionError(ValueError):
    """Raised when an operation receives a matrix of the wrong dimension."""
    pass


class ContractViolation(ValueError):
    """Raised when an input breaks an operation's precondition."""
    pass


class Party(IntEnum):
    A = 0
    B = 1
    C = 2

    @classmethod
    def parse(cls, value: Union["Party", str, int]) -> "Party":
        if isinstance(value, Party):
            return value
        if isinstance(value, str):
            try:
                return cls[value.upper()]
            except KeyError:
                raise ValueError(f"Unknown party '{value}', expected one of A, B, C")
        return cls(value)


PartyLike = Union[Party, str, int]


class EigenDecomposition(NamedTuple):
    values: np.ndarray  # ascending, real
    vectors: np.ndarray  # columns are orthonormal eigenvectors


def kron(a: ComplexMatrix, b: ComplexMatrix) -> ComplexMatrix:
    """Entry (i*b.dim + k, j*b.dim + l) equals a[i, j] * b[k, l]."""
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def kron_all(ops: Iterable[ComplexMatrix]) -> ComplexMatrix:
    """Left-to-right tensor product, A ⊗ B ⊗ C for three local operators."""
    return reduce(kron, ops)


def dagger(m: ComplexMatrix) -> ComplexMatrix:
    return np.conj(np.asarray(m)).T


def ket_from_amplitudes(amplitudes: dict) -> Ket:
    """Build a 3-qubit ket from {'011': amplitude, ...}."""
    ket = np.zeros(DIM, dtype=complex)
    for label, amplitude in amplitudes.items():
        ket[int(label, 2)] += amplitude
    return ket


def projector(ket: Ket) -> DensityMatrix:
    ket = np.asarray(ket, dtype=complex)
    return np.outer(ket, np.conj(ket))


def _require_three_qubits(rho: ComplexMatrix) -> np.ndarray:
    rho = np.asarray(rho)
    if rho.shape != (DIM, DIM):
        raise DimensionError(f"Expected an {DIM}x{DIM} matrix, got shape {rho.shape}")
    return rho


def partial_transpose(rho: ComplexMatrix, party: PartyLike) -> ComplexMatrix:
    """
    Transpose the row/column indices of one qubit only.

    With basis labels (x y z | x' y' z'), PT_A swaps x<->x', PT_B swaps y<->y'
    and PT_C swaps z<->z'.
    """
    rho = _require_three_qubits(rho)
    k = Party.parse(party).value
    tensor = rho.reshape((2,) * (2 * N_QUBITS))
    axes = list(range(2 * N_QUBITS))
    axes[k], axes[N_QUBITS + k] = axes[N_QUBITS + k], axes[k]
    return tensor.transpose(axes).reshape(DIM, DIM)


def permute_parties(rho: ComplexMatrix, perm: Sequence[PartyLike]) -> ComplexMatrix:
    """
    Conjugate rho by the unitary that reorders the qubit tensor factors.

    Slot i of the result holds the qubit that sat at party perm[i]; for the
    A<->C swap, perm = (C, B, A) maps |001><001| to |100><100|.
    """
    rho = _require_three_qubits(rho)
    order = [Party.parse(p).value for p in perm]
    if sorted(order) != list(range(N_QUBITS)):
        raise ValueError(f"Not a permutation of the parties: {perm!r}")
    tensor = rho.reshape((2,) * (2 * N_QUBITS))
    axes = order + [N_QUBITS + k for k in order]
    return tensor.transpose(axes).reshape(DIM, DIM)


def hermiticity_residual(m: ComplexMatrix) -> float:
    m = np.asarray(m)
    return float(np.max(np.abs(m - dagger(m))))


def max_abs_difference(a: ComplexMatrix, b: ComplexMatrix) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def eig_hermitian(m: ComplexMatrix, tolerances: Tolerances = DEFAULT_TOLERANCES) -> EigenDecomposition:
    """
    Eigendecomposition of a Hermitian matrix, eigenvalues ascending.

    Raises ContractViolation if m is not Hermitian within tolerances.hermiticity.
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"Expected a square matrix, got shape {m.shape}")
    residual = hermiticity_residual(m)
    if residual > tolerances.hermiticity:
        raise ContractViolation(
            f"eig_hermitian needs a Hermitian input, max |m - m†| = {residual:.3e}"
        )
    # Symmetrize so LAPACK sees exactly Hermitian data
    values, vectors = np.linalg.eigh((m + dagger(m)) / 2)
    return EigenDecomposition(values=values, vectors=vectors)


def min_eigenvalue(m: ComplexMatrix, tolerances: Tolerances = DEFAULT_TOLERANCES) -> float:
    return float(eig_hermitian(m, tolerances).values[0])
