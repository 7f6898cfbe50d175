# core/engine/state_family.py
#
# The permutation-symmetric family of 3-qubit states
#     rho = p1 |psi1><psi1| + p2 |psi2><psi2| + p2 |psi3><psi3| + p4 |psi4><psi4|
# parametrized by three angles (alpha, beta, gamma) and a mixing angle omega.
# The weights make rho invariant under partial transposition of any single
# party, which is the premise for biseparability across every cut.

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from core.config import DEFAULT_TOLERANCES, Tolerances
from .linalg_core import (
    DIM,
    DensityMatrix,
    Ket,
    Party,
    eig_hermitian,
    hermiticity_residual,
    ket_from_amplitudes,
    max_abs_difference,
    partial_transpose,
    permute_parties,
    projector,
)

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
SQRT3 = math.sqrt(3.0)
SQRT6 = math.sqrt(6.0)


class FamilyError(Exception):
    """Base class for construction failures of a family member."""
    pass


class InfeasibleError(FamilyError):
    """No real omega solves the biseparability condition for these angles."""

    def __init__(self, message: str, reason: str = "infeasible"):
        super().__init__(message)
        self.reason = reason


class SingularSystemError(FamilyError):
    """The weight system matrix M is (numerically) singular."""

    def __init__(self, message: str, det: float):
        super().__init__(message)
        self.det = det


class InvalidWeightsError(FamilyError):
    """At least one mixing weight is negative."""

    def __init__(self, message: str, weights: "Weights"):
        super().__init__(message)
        self.weights = weights


@dataclass(frozen=True)
class FamilyAngles:
    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"Angle '{name}' must be finite")

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.alpha, self.beta, self.gamma)


@dataclass(frozen=True)
class Coefficients:
    a1: float
    b1: float
    c1: float
    a2: float
    b2: float
    a3: float
    b3: float
    a4: float
    b4: float
    c4: float

    def to_dict(self) -> Dict[str, float]:
        return {k: getattr(self, k) for k in ("a1", "b1", "c1", "a2", "b2", "a3", "b3", "a4", "b4", "c4")}


@dataclass(frozen=True)
class OmegaSolutions:
    coeffA: float
    coeffB: float
    coeffC: float
    discriminant: float
    branches: Tuple[float, ...] = ()
    residuals: Tuple[float, ...] = ()
    degenerate: bool = False

    @property
    def feasible(self) -> bool:
        return bool(self.branches)

    def equivalent_branch(self, index: int) -> Optional[int]:
        """Index of the branch that differs from `index` by pi (same state), if any."""
        omega = self.branches[index]
        for j, other in enumerate(self.branches):
            if j != index and _same_angle_mod_pi(omega, other):
                return j
        return None


@dataclass(frozen=True)
class Weights:
    p1: float
    p2: float
    p4: float
    q: float  # 1 / det(M)

    @property
    def p3(self) -> float:
        return self.p2

    @property
    def det(self) -> float:
        return 1.0 / self.q

    @property
    def normalization(self) -> float:
        return self.p1 + 2.0 * self.p2 + self.p4

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.p1, self.p2, self.p4)

    def min_weight(self) -> float:
        return min(self.p1, self.p2, self.p4)

    def is_nonnegative(self, tolerances: Tolerances = DEFAULT_TOLERANCES) -> bool:
        return self.min_weight() >= -tolerances.weight

    def to_dict(self) -> Dict[str, float]:
        return {"p1": self.p1, "p2": self.p2, "p3": self.p3, "p4": self.p4, "q": self.q}


@dataclass(frozen=True)
class FamilyState:
    angles: FamilyAngles
    omega: float
    coefficients: Coefficients
    weights: Weights
    kets: Tuple[Ket, Ket, Ket, Ket]
    rho: DensityMatrix = field(repr=False)


# --- Coefficients and basis states ---

def coefficients_from_angles(angles: FamilyAngles, omega: float) -> Coefficients:
    sa, ca = math.sin(angles.alpha), math.cos(angles.alpha)
    sb, cb = math.sin(angles.beta), math.cos(angles.beta)
    sg, cg = math.sin(angles.gamma), math.cos(angles.gamma)
    sw, cw = math.sin(omega), math.cos(omega)
    return Coefficients(
        a1=sa * sb, b1=cb / SQRT3, c1=ca * sb,
        a2=cw / SQRT6, b2=sw / SQRT6,
        a3=cw / SQRT2, b3=sw / SQRT2,
        a4=ca * sg, b4=cg / SQRT3, c4=sa * sg,
    )


def basis_states(c: Coefficients) -> Tuple[Ket, Ket, Ket, Ket]:
    psi1 = ket_from_amplitudes({
        '000': c.a1, '001': -c.b1, '010': -c.b1, '100': -c.b1, '111': c.c1,
    })
    psi2 = ket_from_amplitudes({
        '001': -c.a2, '010': 2 * c.a2, '100': -c.a2,
        '011': c.b2, '101': -2 * c.b2, '110': c.b2,
    })
    psi3 = ket_from_amplitudes({
        '100': c.a3, '001': -c.a3,
        '110': c.b3, '011': -c.b3,
    })
    psi4 = ket_from_amplitudes({
        '000': -c.a4, '011': c.b4, '101': c.b4, '110': c.b4, '111': c.c4,
    })
    return (psi1, psi2, psi3, psi4)


def gram_matrix(kets) -> np.ndarray:
    stacked = np.array(kets)
    return np.conj(stacked) @ stacked.T


# --- Omega condition ---

def abc_coefficients(angles: FamilyAngles) -> Tuple[float, float, float]:
    # a1..c4 do not depend on omega
    c = coefficients_from_angles(angles, 0.0)
    coeff_a = c.b1 * c.b4 * (c.a4 * c.c1 - c.b1 * c.b4)
    coeff_b = -c.c1 * (c.a1 * c.b4 ** 2 + c.a4 * c.b1 * c.c4)
    coeff_c = c.a4 * (c.a1 * c.b4 * c.c1 + c.b1 ** 2 * c.c4)
    return coeff_a, coeff_b, coeff_c


def omega_residual(angles: FamilyAngles, omega: float) -> float:
    """|2 a2 b2 A + a2^2 B + b2^2 C| at this omega."""
    coeff_a, coeff_b, coeff_c = abc_coefficients(angles)
    c = coefficients_from_angles(angles, omega)
    return abs(2 * c.a2 * c.b2 * coeff_a + c.a2 ** 2 * coeff_b + c.b2 ** 2 * coeff_c)


def _normalize_angle(omega: float) -> float:
    """Map into (-pi, pi]."""
    wrapped = math.remainder(omega, 2 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2 * math.pi
    return wrapped


def _same_angle_mod_pi(x: float, y: float, tol: float = 1e-12) -> bool:
    return abs(math.remainder(x - y, math.pi)) <= tol


def solve_omega(angles: FamilyAngles, tolerances: Tolerances = DEFAULT_TOLERANCES) -> OmegaSolutions:
    """
    Solve 2 a2 b2 A + a2^2 B + b2^2 C = 0 for omega.

    Dividing by a2^2 gives C t^2 + 2 A t + B = 0 in t = tan(omega), so the
    roots are arctan((-A ± sqrt(A^2 - BC)) / C), each with its +pi copy.
    Returns an empty branch tuple when A^2 - BC <= 0.
    """
    coeff_a, coeff_b, coeff_c = abc_coefficients(angles)
    discriminant = coeff_a ** 2 - coeff_b * coeff_c
    scale = max(abs(coeff_a), abs(coeff_b), abs(coeff_c), 1.0)

    base: List[float] = []
    degenerate = False
    small = tolerances.singular_det * scale
    if abs(coeff_c) < small:
        # a2 (2 b2 A + a2 B) = 0
        if abs(coeff_a) >= small:
            base = [math.atan(-coeff_b / (2 * coeff_a)), math.pi / 2]
        elif abs(coeff_b) < small:
            # every omega solves it
            degenerate = True
        # A = C = 0 with B != 0 is infeasible
    elif discriminant > 0:
        root = math.sqrt(discriminant)
        base = [math.atan((-coeff_a + root) / coeff_c), math.atan((-coeff_a - root) / coeff_c)]

    branches = tuple(_normalize_angle(w) for w in base + [w + math.pi for w in base])
    residuals = tuple(omega_residual(angles, w) for w in branches)
    solutions = OmegaSolutions(
        coeffA=coeff_a, coeffB=coeff_b, coeffC=coeff_c,
        discriminant=discriminant, branches=branches, residuals=residuals,
        degenerate=degenerate,
    )
    if degenerate:
        logger.debug(f"Degenerate omega condition at {angles}: A = B = C = 0")
    elif not branches:
        logger.debug(f"No omega branch at {angles}: A^2 - BC = {discriminant:.3e}")
    return solutions


def require_branches(angles: FamilyAngles, tolerances: Tolerances = DEFAULT_TOLERANCES) -> OmegaSolutions:
    solutions = solve_omega(angles, tolerances)
    if solutions.degenerate:
        raise InfeasibleError(f"Omega condition is degenerate (A = B = C = 0) at {angles}", reason="degenerate")
    if not solutions.feasible and solutions.discriminant > 0:
        # only reachable with A = C = 0
        raise InfeasibleError(
            f"A = C = 0 with B = {solutions.coeffB:.6e} at {angles}, no usable omega", reason="discriminant"
        )
    if not solutions.feasible:
        raise InfeasibleError(
            f"A^2 - BC = {solutions.discriminant:.6e} <= 0 at {angles}, no real omega", reason="discriminant"
        )
    return solutions


# --- Weights ---

def system_matrix(angles: FamilyAngles, omega: float) -> np.ndarray:
    """M with M (p1, p2, p4)^T = (0, 0, 1)^T."""
    c = coefficients_from_angles(angles, omega)
    return np.array([
        [c.b1 ** 2, -2 * c.a2 ** 2, c.a4 * c.b4],
        [c.b1 * c.c1, -2 * c.b2 ** 2, c.b4 ** 2],
        [1.0, 2.0, 1.0],
    ])


def raw_weights(angles: FamilyAngles, omega: float, tolerances: Tolerances = DEFAULT_TOLERANCES) -> Weights:
    """Closed-form weights q * adj(M)[:, 2] without the sign check."""
    c = coefficients_from_angles(angles, omega)
    n1 = 2 * c.a4 * c.b2 ** 2 * c.b4 - 2 * c.a2 ** 2 * c.b4 ** 2
    n2 = -c.b1 ** 2 * c.b4 ** 2 + c.a4 * c.b1 * c.b4 * c.c1
    n4 = -2 * c.b1 ** 2 * c.b2 ** 2 + 2 * c.a2 ** 2 * c.b1 * c.c1
    # cofactor expansion of det(M) along the row (1, 2, 1)
    det = n1 + 2 * n2 + n4
    if abs(det) < tolerances.singular_det:
        raise SingularSystemError(f"|det(M)| = {abs(det):.3e} below {tolerances.singular_det:g}", det=det)
    q = 1.0 / det
    return Weights(p1=q * n1, p2=q * n2, p4=q * n4, q=q)


def solve_weights(angles: FamilyAngles, omega: float, tolerances: Tolerances = DEFAULT_TOLERANCES) -> Weights:
    weights = raw_weights(angles, omega, tolerances)
    if not weights.is_nonnegative(tolerances):
        raise InvalidWeightsError(
            f"Negative weight(s) p1={weights.p1:.6g}, p2={weights.p2:.6g}, p4={weights.p4:.6g}",
            weights=weights,
        )
    return weights


def linear_system_residuals(c: Coefficients, w: Weights) -> Tuple[float, float, float]:
    """Residuals of the three PT-invariance equations."""
    r1 = -c.a4 * c.b4 * w.p4 - (c.b1 ** 2 * w.p1 - 2 * c.a2 ** 2 * w.p2)
    r2 = -c.b1 * c.c1 * w.p1 - (-2 * c.b2 ** 2 * w.p2 + c.b4 ** 2 * w.p4)
    r3 = -4 * c.a2 * c.b2 * w.p2 - (c.a1 * c.c1 * w.p1 - c.a4 * c.c4 * w.p4)
    return (abs(r1), abs(r2), abs(r3))


def _near_tan_pole(x: float, tol: float) -> bool:
    return abs(math.cos(x)) < tol


def check_positivity_inequalities(
    angles: FamilyAngles,
    omega: float,
    q_sign: Optional[float] = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> bool:
    """
    Weight positivity in inequality form.

        tan(gamma) >= 1 / (sqrt3 cos(alpha) tan^2(omega))    (p1 >= 0)
        tan(beta)  >= tan^2(omega) / (sqrt3 cos(alpha))      (p4 >= 0)

    hold when q > 0 and cos(alpha) > 0; each sign flip of q or cos(alpha)
    reverses both. p2 = q A, so p2 >= 0 iff sign(q) A >= 0. Near a pole of
    tan, or when cos(alpha) or tan(omega) vanishes, the answer comes from the
    closed-form weights directly.
    """
    tol = tolerances.tan_pole
    if q_sign is None:
        try:
            q_sign = math.copysign(1.0, raw_weights(angles, omega, tolerances).q)
        except SingularSystemError:
            return False

    poles = (
        _near_tan_pole(angles.beta, tol)
        or _near_tan_pole(angles.gamma, tol)
        or _near_tan_pole(omega, tol)
        or abs(math.sin(omega)) < tol
        or abs(math.cos(angles.alpha)) < tol
    )
    if poles:
        try:
            return raw_weights(angles, omega, tolerances).is_nonnegative(tolerances)
        except SingularSystemError:
            return False

    cos_alpha = math.cos(angles.alpha)
    tan2 = math.tan(omega) ** 2
    orientation = math.copysign(1.0, q_sign) * math.copysign(1.0, cos_alpha)

    gamma_margin = math.tan(angles.gamma) - 1.0 / (SQRT3 * cos_alpha * tan2)
    beta_margin = math.tan(angles.beta) - tan2 / (SQRT3 * cos_alpha)
    coeff_a, _, _ = abc_coefficients(angles)

    return (
        orientation * gamma_margin >= 0
        and orientation * beta_margin >= 0
        and math.copysign(1.0, q_sign) * coeff_a >= 0
    )


# --- State assembly ---

def _freeze(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


def assemble_state(angles: FamilyAngles, omega: float, tolerances: Tolerances = DEFAULT_TOLERANCES) -> FamilyState:
    weights = solve_weights(angles, omega, tolerances)
    coefficients = coefficients_from_angles(angles, omega)
    kets = tuple(_freeze(k) for k in basis_states(coefficients))
    p = (weights.p1, weights.p2, weights.p2, weights.p4)
    rho = sum(pj * projector(k) for pj, k in zip(p, kets))
    return FamilyState(
        angles=angles, omega=omega, coefficients=coefficients,
        weights=weights, kets=kets, rho=_freeze(rho),
    )


def valid_branches(
    angles: FamilyAngles,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    solutions: Optional[OmegaSolutions] = None,
) -> List[Tuple[int, FamilyState]]:
    """
    Every omega branch whose weights are nonnegative, as (branch index, state).
    Raises InfeasibleError when no branch exists at all.
    """
    solutions = solutions or require_branches(angles, tolerances)
    states = []
    for index, omega in enumerate(solutions.branches):
        try:
            states.append((index, assemble_state(angles, omega, tolerances)))
        except (SingularSystemError, InvalidWeightsError) as e:
            logger.debug(f"Branch {index} (omega={omega:.6f}) rejected: {e}")
    return states


# --- Reference states ---

def maximally_mixed_state() -> DensityMatrix:
    return np.eye(DIM, dtype=complex) / DIM


def ghz_state() -> DensityMatrix:
    ket = ket_from_amplitudes({'000': 1 / SQRT2, '111': 1 / SQRT2})
    return projector(ket)


# --- Certification ---

@dataclass
class CertificationRecord:
    hermiticity_residual: float
    trace_residual: float
    min_eigenvalue: float
    spectrum: List[float]
    min_pt_eigenvalues: Dict[str, float]
    pt_spectra: Dict[str, List[float]]
    pt_residuals: Dict[str, float]
    symmetry_residual: float
    relation_residuals: Tuple[float, float, float]
    orthonormality_residual: Optional[float]
    linear_system_residuals: Optional[Tuple[float, float, float]]
    checks: Dict[str, bool]

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> Dict:
        return {
            "hermiticity_residual": self.hermiticity_residual,
            "trace_residual": self.trace_residual,
            "min_eigenvalue": self.min_eigenvalue,
            "spectrum": list(self.spectrum),
            "min_pt_eigenvalues": dict(self.min_pt_eigenvalues),
            "pt_spectra": {k: list(v) for k, v in self.pt_spectra.items()},
            "pt_residuals": dict(self.pt_residuals),
            "symmetry_residual": self.symmetry_residual,
            "relation_residuals": list(self.relation_residuals),
            "orthonormality_residual": self.orthonormality_residual,
            "linear_system_residuals": (
                list(self.linear_system_residuals) if self.linear_system_residuals is not None else None
            ),
            "checks": dict(self.checks),
            "passed": self.passed,
        }


def matrix_element_relations(rho: DensityMatrix) -> Tuple[float, float, float]:
    """
    Residuals of rho_{000,011} = rho_{001,010}, rho_{010,111} = rho_{011,110}
    and rho_{000,111} = rho_{001,110}.
    """
    idx = lambda label: int(label, 2)
    pairs = (
        (('000', '011'), ('001', '010')),
        (('010', '111'), ('011', '110')),
        (('000', '111'), ('001', '110')),
    )
    return tuple(
        float(abs(rho[idx(r1), idx(c1)] - rho[idx(r2), idx(c2)]))
        for (r1, c1), (r2, c2) in pairs
    )


def certify(state: Union[FamilyState, DensityMatrix], tolerances: Tolerances = DEFAULT_TOLERANCES) -> CertificationRecord:
    """Numerical premise checks for full biseparability of a symmetric 3-qubit state."""
    family_state = state if isinstance(state, FamilyState) else None
    rho = np.asarray(family_state.rho if family_state is not None else state, dtype=complex)
    if rho.shape != (DIM, DIM):
        raise ValueError(f"certify expects an {DIM}x{DIM} density matrix, got {rho.shape}")

    herm = hermiticity_residual(rho)
    trace_residual = float(abs(np.trace(rho) - 1.0))
    # Hermitian part feeds the spectra so a slightly non-Hermitian input is still reported
    hermitian_rho = (rho + np.conj(rho).T) / 2
    relaxed = Tolerances(hermiticity=math.inf)
    spectrum = eig_hermitian(hermitian_rho, relaxed).values

    pt_spectra, pt_residuals = {}, {}
    for party in Party:
        pt = partial_transpose(hermitian_rho, party)
        pt_spectra[party.name] = eig_hermitian(pt, relaxed).values.tolist()
        pt_residuals[party.name] = max_abs_difference(rho, partial_transpose(rho, party))

    symmetry_residual = max(
        max_abs_difference(rho, permute_parties(rho, perm))
        for perm in itertools.permutations(Party)
    )
    relations = matrix_element_relations(rho)

    ortho = None
    system = None
    if family_state is not None:
        ortho = float(np.max(np.abs(gram_matrix(family_state.kets) - np.eye(4))))
        system = linear_system_residuals(family_state.coefficients, family_state.weights)

    min_pt = {name: float(values[0]) for name, values in pt_spectra.items()}
    checks = {
        "hermitian": herm <= tolerances.hermiticity,
        "unit_trace": trace_residual <= tolerances.trace,
        "positive_semidefinite": float(spectrum[0]) >= -tolerances.psd,
        "ppt": all(v >= -tolerances.psd for v in min_pt.values()),
        "pt_invariant": all(v <= tolerances.pt_invariance for v in pt_residuals.values()),
        "permutation_symmetric": symmetry_residual <= tolerances.symmetry,
        "matrix_element_relations": max(relations) <= tolerances.pt_invariance,
    }
    if ortho is not None:
        checks["orthonormal_basis"] = ortho <= tolerances.orthonormality
    if system is not None:
        checks["linear_system"] = max(system) <= tolerances.linear_system

    record = CertificationRecord(
        hermiticity_residual=herm,
        trace_residual=trace_residual,
        min_eigenvalue=float(spectrum[0]),
        spectrum=spectrum.tolist(),
        min_pt_eigenvalues=min_pt,
        pt_spectra=pt_spectra,
        pt_residuals=pt_residuals,
        symmetry_residual=symmetry_residual,
        relation_residuals=relations,
        orthonormality_residual=ortho,
        linear_system_residuals=system,
        checks=checks,
    )
    if not record.passed:
        failed = [name for name, ok in checks.items() if not ok]
        logger.warning(f"Certification failed: {', '.join(failed)}")
    return record
