# core/engine/bell_engine.py
#
# Tripartite Bell expressions with two dichotomic settings per party.
# A monomial is a tuple (sA, sB, sC) with 0 = party absent, 1/2 = setting.
# Outcomes are +/-1 and every expression is a sum of correlators.

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, NamedTuple, Optional, Tuple

import numpy as np

from core.config import DEFAULT_TOLERANCES, Tolerances
from .linalg_core import (
    DIM,
    IDENTITY_2,
    N_QUBITS,
    SIGMA_X,
    SIGMA_Z,
    ComplexMatrix,
    ContractViolation,
    DensityMatrix,
    kron_all,
)

logger = logging.getLogger(__name__)

Monomial = Tuple[int, int, int]
Strategy = Tuple[Tuple[int, int], Tuple[int, int], Tuple[int, int]]

PARTY_NAMES = ("A", "B", "C")
ALL_MONOMIALS: Tuple[Monomial, ...] = tuple(
    m for m in itertools.product(range(3), repeat=N_QUBITS) if any(m)
)


@dataclass(frozen=True)
class MeasurementAngles:
    """Observables A_j = cos(theta_j) sz + sin(theta_j) sx, shared by all parties."""
    theta1: float
    theta2: float

    def __post_init__(self):
        if not (math.isfinite(self.theta1) and math.isfinite(self.theta2)):
            raise ValueError("Measurement angles must be finite")


def monomial_label(monomial: Monomial) -> str:
    """(1, 2, 0) -> 'A1B2'"""
    return "".join(f"{PARTY_NAMES[k]}{s}" for k, s in enumerate(monomial) if s)


def symmetrize(monomial: Monomial) -> List[Monomial]:
    """Distinct monomials generated by the six party permutations, each once."""
    return sorted(set(itertools.permutations(monomial)))


@dataclass
class BellExpression:
    terms: Dict[Monomial, int] = field(default_factory=dict)
    name: str = "custom"

    def __post_init__(self):
        for monomial in self.terms:
            if len(monomial) != N_QUBITS or any(s not in (0, 1, 2) for s in monomial) or not any(monomial):
                raise ValueError(f"Invalid monomial {monomial!r}")

    @classmethod
    def from_symmetrized(cls, seeds: Iterable[Tuple[int, Monomial]], name: str) -> "BellExpression":
        terms: Dict[Monomial, int] = {}
        for coefficient, seed in seeds:
            for monomial in symmetrize(seed):
                terms[monomial] = terms.get(monomial, 0) + coefficient
        return cls(terms={m: c for m, c in terms.items() if c != 0}, name=name)

    def negated(self) -> "BellExpression":
        return BellExpression(terms={m: -c for m, c in self.terms.items()}, name=f"-{self.name}")

    def coefficient_tensor(self) -> np.ndarray:
        """3x3x3 array indexed by (sA, sB, sC)."""
        tensor = np.zeros((3, 3, 3))
        for monomial, coefficient in self.terms.items():
            tensor[monomial] = coefficient
        return tensor

    def algebraic_maximum(self) -> int:
        return sum(abs(c) for c in self.terms.values())

    def to_dict(self) -> Dict[str, int]:
        return {monomial_label(m): c for m, c in sorted(self.terms.items())}


def sliwa5_expression() -> BellExpression:
    """
    sym[A1 + A1B2 - A2B2 - A1B1C1 - A2B1C1 + A2B2C2], local bound 3.
    """
    seeds = [
        (+1, (1, 0, 0)),
        (+1, (1, 2, 0)),
        (-1, (2, 2, 0)),
        (-1, (1, 1, 1)),
        (-1, (2, 1, 1)),
        (+1, (2, 2, 2)),
    ]
    return BellExpression.from_symmetrized(seeds, name="sliwa5")


BUILTIN_EXPRESSIONS = {
    "sliwa5": sliwa5_expression,
}


# --- Quantum side ---

def observable(theta: float) -> ComplexMatrix:
    return math.cos(theta) * SIGMA_Z + math.sin(theta) * SIGMA_X


def local_operators(angles: MeasurementAngles) -> np.ndarray:
    """Stack (I, A_1, A_2), indexed like a monomial slot."""
    return np.array([IDENTITY_2, observable(angles.theta1), observable(angles.theta2)])


def _as_tensor(rho: DensityMatrix) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (DIM, DIM):
        raise ContractViolation(f"Expected an {DIM}x{DIM} density matrix, got {rho.shape}")
    return rho.reshape((2,) * (2 * N_QUBITS))


class CorrelationTensor:
    """Expectation values <O_sA ⊗ O_sB ⊗ O_sC> for the covered monomials."""

    def __init__(self, values: np.ndarray, monomials: Optional[Iterable[Monomial]] = None):
        # values[0, 0, 0] is the trace and is not a monomial
        self.values = values
        self.monomials = frozenset(ALL_MONOMIALS if monomials is None else monomials)

    def __getitem__(self, monomial: Monomial) -> float:
        if monomial not in self:
            raise ContractViolation(f"Correlation tensor has no monomial {monomial!r}")
        return float(self.values[monomial])

    def __contains__(self, monomial) -> bool:
        return monomial in self.monomials

    def items(self):
        for monomial in ALL_MONOMIALS:
            if monomial in self.monomials:
                yield monomial, float(self.values[monomial])

    def to_dict(self) -> Dict[str, float]:
        return {monomial_label(m): v for m, v in self.items()}


def correlation_tensor(
    rho: DensityMatrix,
    angles: MeasurementAngles,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> CorrelationTensor:
    """
    values[i, j, k] = tr(rho · O_i ⊗ O_j ⊗ O_k) with O_0 = I, O_s = A_s.
    """
    ops = local_operators(angles)
    # tr(rho X⊗Y⊗Z) = sum rho[abc, def] X[d, a] Y[e, b] Z[f, c]
    raw = np.einsum('abcdef,ida,jeb,kfc->ijk', _as_tensor(rho), ops, ops, ops)
    imaginary = float(np.max(np.abs(raw.imag)))
    if imaginary > tolerances.imaginary_part:
        raise ContractViolation(f"Correlators have imaginary part {imaginary:.3e}; is rho Hermitian?")
    return CorrelationTensor(raw.real)


def correlator_by_trace(rho: DensityMatrix, angles: MeasurementAngles, monomial: Monomial) -> float:
    """Single correlator through an explicit 8x8 observable; slow reference path."""
    ops = local_operators(angles)
    operator = kron_all(ops[s] for s in monomial)
    return float(np.trace(np.asarray(rho) @ operator).real)


def evaluate(expr: BellExpression, tensor: CorrelationTensor) -> float:
    total = 0.0
    for monomial, coefficient in expr.terms.items():
        total += coefficient * tensor[monomial]
    return total


def bell_value(rho: DensityMatrix, angles: MeasurementAngles, expr: BellExpression) -> float:
    return evaluate(expr, correlation_tensor(rho, angles))


# --- Local side ---

class LocalBound(NamedTuple):
    bound: float
    strategies: List[Strategy]


def all_strategies() -> List[Strategy]:
    """The 4^3 deterministic strategies; strategy[k][s-1] is party k's outcome for setting s."""
    per_party = list(itertools.product((1, -1), repeat=2))
    return list(itertools.product(per_party, repeat=N_QUBITS))


def strategy_value(expr: BellExpression, strategy: Strategy) -> float:
    total = 0
    for monomial, coefficient in expr.terms.items():
        product = 1
        for party, setting in enumerate(monomial):
            if setting:
                product *= strategy[party][setting - 1]
        total += coefficient * product
    return total


def local_bound(expr: BellExpression) -> LocalBound:
    """Exhaustive maximum over deterministic strategies, with every maximizer."""
    values = [(strategy_value(expr, s), s) for s in all_strategies()]
    bound = max(v for v, _ in values)
    argmax = [s for v, s in values if v == bound]
    logger.debug(f"Local bound of '{expr.name}' = {bound} attained by {len(argmax)} strategies")
    return LocalBound(bound=bound, strategies=argmax)


def strategy_label(strategy: Strategy) -> str:
    """((1, -1), ...) -> 'A1=+1 A2=-1 ...'"""
    parts = []
    for party, outcomes in zip(PARTY_NAMES, strategy):
        for setting, outcome in enumerate(outcomes, start=1):
            parts.append(f"{party}{setting}={outcome:+d}")
    return " ".join(parts)


# --- Probability table ---

def projectors(angles: MeasurementAngles) -> np.ndarray:
    """P[x, a] = (I + s_a A_x) / 2 with outcome index 0 -> +1, 1 -> -1."""
    ops = local_operators(angles)[1:]
    signs = (1, -1)
    return np.array([[(IDENTITY_2 + sign * op) / 2 for sign in signs] for op in ops])


def probability_distribution(rho: DensityMatrix, angles: MeasurementAngles) -> np.ndarray:
    """
    p(abc|xyz) as an array indexed [x, y, z, a, b, c]; settings and outcomes
    are 0-based, outcome 0 is +1.
    """
    pi = projectors(angles)
    table = np.einsum('ijklmn,xali,ybmj,zcnk->xyzabc', _as_tensor(rho), pi, pi, pi)
    return table.real


def correlators_from_distribution(table: np.ndarray) -> CorrelationTensor:
    """Recompute correlators from p(abc|xyz); absent parties are marginalized at setting 1."""
    sign = np.array([1.0, -1.0])
    values = np.zeros((3, 3, 3))
    values[0, 0, 0] = 1.0
    for monomial in ALL_MONOMIALS:
        x, y, z = (max(s - 1, 0) for s in monomial)
        weights = [sign if s else np.ones(2) for s in monomial]
        values[monomial] = np.einsum('abc,a,b,c->', table[x, y, z], *weights)
    return CorrelationTensor(values)


def normalization_residual(table: np.ndarray) -> float:
    sums = table.sum(axis=(3, 4, 5))
    return float(np.max(np.abs(sums - 1.0)))


def no_signaling_residual(table: np.ndarray) -> float:
    """Largest change of any two-party marginal when the third party switches setting."""
    residual = 0.0
    ab = table.sum(axis=5)  # [x, y, z, a, b]
    residual = max(residual, float(np.max(np.abs(ab[:, :, 0] - ab[:, :, 1]))))
    ac = table.sum(axis=4)  # [x, y, z, a, c]
    residual = max(residual, float(np.max(np.abs(ac[:, 0] - ac[:, 1]))))
    bc = table.sum(axis=3)  # [x, y, z, b, c]
    residual = max(residual, float(np.max(np.abs(bc[0] - bc[1]))))
    return residual
