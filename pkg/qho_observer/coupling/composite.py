"""
Directly coupled plant-observer system.

The composite oscillator has CCR matrix Theta = diag(Theta1, Theta2) and energy
matrix R = [[K, L], [L^T, M]]; its dynamics 2 Theta R split as [[A, B L], [beta L^T, alpha]]
with A = 2 Theta1 K, B = 2 Theta1, alpha = 2 Theta2 M and beta = 2 Theta2.
"""

import dataclasses
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import scipy.linalg

from config import TOL_HAMILTONIAN, TOL_PSD
from qho_observer.errors import (
    BadEnergy, BadWeights, DimensionMismatch, GramianNotPositive, HorizonTooLong,
    InvariantViolation, NotHurwitz, UncoupledBlocksNotStable
)
from qho_observer.linalg import matlib
from qho_observer.logger import get_logger
from qho_observer.oscillator import qho

log = get_logger("coupling.composite")


@dataclass(frozen=True, eq=False)
class PlantObserverSystem:
    """
    A complete filtering problem: plant, observer, coupling, cost weights and horizon.

    Matrices are validated and stored as float arrays on construction; use
    ``with_coupling`` and friends to derive modified systems.
    """
    theta1: np.ndarray
    theta2: np.ndarray
    k_energy: np.ndarray
    m_energy: np.ndarray
    coupling: np.ndarray
    sigma1: np.ndarray
    sigma2: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    pi_weight: np.ndarray
    lam: float
    tau: float

    def __post_init__(self):
        theta1 = qho.validate_ccr(self.theta1, "theta1")
        theta2 = qho.validate_ccr(self.theta2, "theta2")
        n, nu = theta1.shape[0], theta2.shape[0]

        k_energy = _symmetric(self.k_energy, "K", n)
        m_energy = _symmetric(self.m_energy, "M", nu)
        coupling = matlib.as_matrix(self.coupling, "L")
        if coupling.shape != (n, nu):
            raise DimensionMismatch(f"L must be {n}x{nu}, got {coupling.shape}")

        sigma1 = qho.InitialMoments.from_sigma(self.sigma1, theta1).sigma
        sigma2 = qho.InitialMoments.from_sigma(self.sigma2, theta2).sigma

        s1 = matlib.as_matrix(self.s1, "S1")
        s2 = matlib.as_matrix(self.s2, "S2")
        if s1.shape[1] != n or s2.shape[1] != nu or s1.shape[0] != s2.shape[0]:
            raise DimensionMismatch(
                f"S1 {s1.shape} and S2 {s2.shape} must have equal row counts and {n}, {nu} columns"
            )

        pi_weight = matlib.as_matrix(self.pi_weight, "Pi", square=True)
        if pi_weight.shape != (n, n):
            raise DimensionMismatch(f"Pi must be {n}x{n}, got {pi_weight.shape}")
        if not matlib.is_symmetric(pi_weight):
            raise BadWeights("Pi is not symmetric")
        pi_weight = matlib.symmetrize(pi_weight)
        if not matlib.is_positive_definite(pi_weight, 1e-14):
            raise BadWeights("Pi is not positive definite")

        lam = float(self.lam)
        if not (np.isfinite(lam) and lam > 0.0):
            raise BadWeights(f"lambda must be a positive real, got {self.lam}")
        tau = float(self.tau)
        if not (np.isfinite(tau) and tau > 0.0):
            raise ValueError(f"tau must be a positive real, got {self.tau}")

        for name, value in (
            ("theta1", theta1), ("theta2", theta2), ("k_energy", k_energy),
            ("m_energy", m_energy), ("coupling", coupling), ("sigma1", sigma1),
            ("sigma2", sigma2), ("s1", s1), ("s2", s2), ("pi_weight", pi_weight),
            ("lam", lam), ("tau", tau),
        ):
            object.__setattr__(self, name, value)

    @property
    def n(self) -> int:
        return self.theta1.shape[0]

    @property
    def nu(self) -> int:
        return self.theta2.shape[0]

    @property
    def p(self) -> int:
        return self.s1.shape[0]

    @property
    def theta(self) -> np.ndarray:
        return scipy.linalg.block_diag(self.theta1, self.theta2)

    @property
    def energy(self) -> np.ndarray:
        return np.block([[self.k_energy, self.coupling], [self.coupling.T, self.m_energy]])

    @property
    def sigma(self) -> np.ndarray:
        return scipy.linalg.block_diag(self.sigma1, self.sigma2)

    @property
    def s(self) -> np.ndarray:
        """Error weight S = [S1, -S2] of the estimation error S1 X - S2 xi."""
        return np.hstack([self.s1, -self.s2])

    def with_coupling(self, coupling) -> "PlantObserverSystem":
        return dataclasses.replace(self, coupling=coupling)

    def with_observer_energy(self, m_energy) -> "PlantObserverSystem":
        return dataclasses.replace(self, m_energy=m_energy)

    def with_lambda(self, lam: float) -> "PlantObserverSystem":
        return dataclasses.replace(self, lam=lam)


def _symmetric(m, name: str, order: int) -> np.ndarray:
    m = matlib.as_matrix(m, name, square=True)
    if m.shape[0] != order:
        raise DimensionMismatch(f"{name} must be {order}x{order}, got {m.shape}")
    if not matlib.is_symmetric(m):
        raise BadEnergy(f"{name} is not symmetric")
    return matlib.symmetrize(m)


@dataclass(frozen=True, eq=False)
class CompositeDynamics:
    """Composite dynamics matrix, its discounted shift and the cost output matrix."""
    a_full: np.ndarray
    a_tau: np.ndarray
    c_full: np.ndarray
    n: int

    def blocks(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(A, B L, beta L^T, alpha) blocks of the composite dynamics."""
        return matlib.split_blocks(self.a_full, self.n)


@dataclass(frozen=True, eq=False)
class GramianSet:
    """Gramians, Hankelian and their Lie-algebraic forms P = G Theta^{-1}, Q = Theta O, D = [Q, P]."""
    p_gram: np.ndarray
    q_gram: np.ndarray
    hankelian: np.ndarray
    lie_p: np.ndarray
    lie_q: np.ndarray
    lie_d: np.ndarray


@dataclass(frozen=True)
class LieResiduals:
    """Frobenius norms of the Lie-form Lyapunov equations and of the Jacobi identity."""
    p_equation: float
    q_equation: float
    jacobi: float


def assemble(sys: PlantObserverSystem) -> CompositeDynamics:
    """
    Assemble the composite dynamics 2 Theta R and the output matrix
    C = [[S1, -S2], [0, sqrt(lambda Pi) L]].
    """
    theta = sys.theta
    a_full = 2.0 * theta @ sys.energy
    defect = matlib.hamiltonian_defect(a_full, theta)
    if defect > TOL_HAMILTONIAN * max(1.0, np.linalg.norm(a_full) * np.linalg.norm(theta)):
        raise InvariantViolation(f"composite dynamics is not Hamiltonian (defect {defect:.3e})")
    a_tau = a_full - np.eye(sys.n + sys.nu) / (2.0 * sys.tau)
    penalty_root = matlib.sym_sqrt(sys.lam * sys.pi_weight)
    c_full = np.block([
        [sys.s1, -sys.s2],
        [np.zeros((sys.n, sys.n)), penalty_root @ sys.coupling],
    ])
    return CompositeDynamics(a_full=a_full, a_tau=a_tau, c_full=c_full, n=sys.n)


def admissibility(sys: PlantObserverSystem, dyn: CompositeDynamics) -> Tuple[bool, float]:
    """Admissibility flag and margin 1/(2 max(0, abscissa)) - tau (inf when marginally stable)."""
    margin = matlib.admissible_horizon(dyn.a_full) - sys.tau
    return bool(margin > 0.0), float(margin)


def positivity_criterion(sys: PlantObserverSystem) -> Tuple[bool, float]:
    """
    Check R > 0 through K > 0, M > 0 and ||K^{-1/2} L M^{-1/2}|| < 1.

    Returns the flag and the contraction norm (inf when K or M is not positive definite).
    """
    if not (matlib.is_positive_definite(sys.k_energy) and matlib.is_positive_definite(sys.m_energy)):
        return False, float(np.inf)
    contraction = matlib.sym_inv_sqrt(sys.k_energy) @ sys.coupling @ matlib.sym_inv_sqrt(sys.m_energy)
    norm = float(np.linalg.norm(contraction, 2))
    positive = norm < 1.0 - 1e-12
    by_eigenvalue = matlib.min_eigenvalue(sys.energy) > 0.0
    if positive != by_eigenvalue:
        log.debug(f"contraction test ({norm:.15f}) and eigenvalue test disagree at the boundary")
    return positive, norm


def _require_admissible(sys: PlantObserverSystem, dyn: CompositeDynamics) -> None:
    admissible, margin = admissibility(sys, dyn)
    if not admissible:
        raise HorizonTooLong(f"tau = {sys.tau:g} is not admissible (margin {margin:.3e})")


def controllability_gramian(sys: PlantObserverSystem, dyn: CompositeDynamics) -> np.ndarray:
    """
    (1/tau) L(A_tau, Sigma).

    Raises:
    -------
    HorizonTooLong
        If tau is not admissible.
    GramianNotPositive
        If the solution fails the semidefinite check.
    """
    _require_admissible(sys, dyn)
    p_gram = matlib.solve_ale(dyn.a_tau, sys.sigma) / sys.tau
    lowest = matlib.min_eigenvalue(p_gram)
    if lowest < -TOL_PSD * max(1.0, np.linalg.norm(p_gram, 2)):
        raise GramianNotPositive(f"controllability Gramian has eigenvalue {lowest:.3e}")
    return p_gram


def observability_gramian(sys: PlantObserverSystem, dyn: CompositeDynamics) -> np.ndarray:
    """L(A_tau^T, C^T C)."""
    _require_admissible(sys, dyn)
    return matlib.solve_ale(dyn.a_tau.T, dyn.c_full.T @ dyn.c_full)


def gramian_set(sys: PlantObserverSystem, dyn: CompositeDynamics) -> GramianSet:
    p_gram = controllability_gramian(sys, dyn)
    q_gram = observability_gramian(sys, dyn)
    theta = sys.theta
    theta_inv = np.linalg.inv(theta)
    lie_p = p_gram @ theta_inv
    lie_q = theta @ q_gram
    return GramianSet(
        p_gram=p_gram,
        q_gram=q_gram,
        hankelian=q_gram @ p_gram,
        lie_p=lie_p,
        lie_q=lie_q,
        lie_d=matlib.commutator(lie_q, lie_p),
    )


def lie_residuals(sys: PlantObserverSystem, dyn: CompositeDynamics, gramians: GramianSet) -> LieResiduals:
    """
    Residuals of [A, P] = (P - Sigma Theta^{-1})/tau, [A, Q] = Theta C^T C - Q/tau and
    (1/tau)[Sigma Theta^{-1}, Q] + [Theta C^T C, P] + [D, A] = 0.
    """
    theta = sys.theta
    source_p = sys.sigma @ np.linalg.inv(theta)
    source_q = theta @ dyn.c_full.T @ dyn.c_full
    a = dyn.a_full
    p_eq = matlib.commutator(a, gramians.lie_p) - (gramians.lie_p - source_p) / sys.tau
    q_eq = matlib.commutator(a, gramians.lie_q) - (source_q - gramians.lie_q / sys.tau)
    jacobi = (
        matlib.commutator(source_p, gramians.lie_q) / sys.tau
        + matlib.commutator(source_q, gramians.lie_p)
        + matlib.commutator(gramians.lie_d, a)
    )
    return LieResiduals(
        p_equation=float(np.linalg.norm(p_eq)),
        q_equation=float(np.linalg.norm(q_eq)),
        jacobi=float(np.linalg.norm(jacobi)),
    )


def resolvent_forms(sys: PlantObserverSystem, dyn: CompositeDynamics) -> Tuple[np.ndarray, np.ndarray]:
    """
    P = (I - tau ad_A)^{-1}(Sigma Theta^{-1}) and Q = tau (I + tau ad_A)^{-1}(Theta C^T C),
    with ad_A materialized on vectorized matrices.
    """
    _require_admissible(sys, dyn)
    order = sys.n + sys.nu
    identity = np.eye(order)
    a = dyn.a_full
    ad = np.kron(identity, a) - np.kron(a.T, identity)
    unit = np.eye(order * order)
    theta = sys.theta
    source_p = matlib.vectorize(sys.sigma @ np.linalg.inv(theta))
    source_q = matlib.vectorize(theta @ dyn.c_full.T @ dyn.c_full)
    lie_p = matlib.unvectorize(np.linalg.solve(unit - sys.tau * ad, source_p), order, order)
    lie_q = sys.tau * matlib.unvectorize(np.linalg.solve(unit + sys.tau * ad, source_q), order, order)
    return lie_p, lie_q


def uncoupled_gramians(sys: PlantObserverSystem) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gramians P1 = (1/tau) L(A_tau, Sigma1) and P2 = (1/tau) L(alpha_tau, Sigma2) at L = 0.

    Raises:
    -------
    UncoupledBlocksNotStable
        If A_tau or alpha_tau is not Hurwitz.
    """
    shift_n = np.eye(sys.n) / (2.0 * sys.tau)
    shift_nu = np.eye(sys.nu) / (2.0 * sys.tau)
    a_tau = 2.0 * sys.theta1 @ sys.k_energy - shift_n
    alpha_tau = 2.0 * sys.theta2 @ sys.m_energy - shift_nu
    try:
        p1 = matlib.solve_ale(a_tau, sys.sigma1) / sys.tau
        p2 = matlib.solve_ale(alpha_tau, sys.sigma2) / sys.tau
    except NotHurwitz as e:
        raise UncoupledBlocksNotStable(f"uncoupled blocks are not stable at tau = {sys.tau:g}: {e}") from e
    return p1, p2


def uncoupled_gramian(sys: PlantObserverSystem) -> np.ndarray:
    """Block-diagonal controllability Gramian diag(P1, P2) of the uncoupled system."""
    return scipy.linalg.block_diag(*uncoupled_gramians(sys))
