"""
Filtering cost of a plant-observer system, its Frechet derivatives and the
first-order optimality conditions in standard and Lie-algebraic form.

The cost is Z = <C^T C, G> = (1/tau) <O, Sigma>, where G and O are the
controllability and observability Gramians of the discounted composite system
and E = O G is the Hankelian.
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from config import DET_REL_TOL, GD_GRAD_TOL, GD_INITIAL_STEP, GD_MAX_ITER, SINGULAR_REL_TOL
from qho_observer.errors import (
    DegenerateD12, DegenerateP22, DimensionMismatch, HorizonTooLong, NotHurwitz
)
from qho_observer.coupling import composite
from qho_observer.coupling.composite import GramianSet, PlantObserverSystem
from qho_observer.linalg import matlib
from qho_observer.logger import get_logger

log = get_logger("synthesis.stationarity")


@dataclass(frozen=True)
class CostReport:
    """Total cost, its error/penalty split and the dual (observability) form of the total."""
    total: float
    error_ms: float
    penalty: float
    dual_total: float


@dataclass(frozen=True, eq=False)
class GradientPair:
    grad_l: np.ndarray
    grad_m: np.ndarray


@dataclass(frozen=True)
class StationarityResidual:
    res_l: float
    res_m: float
    res_lie_l: float
    res_lie_m: float


@dataclass(frozen=True, eq=False)
class EnergyRecovery:
    """Observer energy matrix recovered from the Jacobi identity, with its symmetry defect."""
    m_energy: np.ndarray
    symmetry_defect: float


@dataclass(frozen=True)
class CovarianceRelation:
    """Frobenius norms of the observer-row and plant-row covariance relations."""
    lower: float
    upper: float


def evaluate(sys: PlantObserverSystem) -> Tuple[composite.CompositeDynamics, GramianSet]:
    """Assemble the composite system and compute all Gramians."""
    dyn = composite.assemble(sys)
    return dyn, composite.gramian_set(sys, dyn)


def cost(sys: PlantObserverSystem, gramians: Optional[GramianSet] = None) -> CostReport:
    """
    Cost Z and its parts E_tau(E^T E) = <S^T S, G> and lambda tr(Pi L G22 L^T).

    Raises:
    -------
    HorizonTooLong
        If tau is not admissible.
    """
    dyn = composite.assemble(sys)
    if gramians is None:
        gramians = composite.gramian_set(sys, dyn)
    p_gram = gramians.p_gram
    weight = sys.s.T @ sys.s
    error_ms = matlib.frobenius_inner(weight, p_gram)
    g22 = p_gram[sys.n:, sys.n:]
    penalty = sys.lam * float(np.trace(sys.pi_weight @ sys.coupling @ g22 @ sys.coupling.T))
    total = matlib.frobenius_inner(dyn.c_full.T @ dyn.c_full, p_gram)
    dual_total = matlib.frobenius_inner(gramians.q_gram, sys.sigma) / sys.tau
    if abs(total - dual_total) > 1e-9 * max(1.0, abs(total)):
        log.warning(f"primal cost {total:.12g} and dual cost {dual_total:.12g} disagree")
    return CostReport(total=total, error_ms=error_ms, penalty=penalty, dual_total=dual_total)


def _hankelian_blocks(sys: PlantObserverSystem, gramians: GramianSet):
    return matlib.split_blocks(gramians.hankelian, sys.n)


def gradients(sys: PlantObserverSystem, gramians: Optional[GramianSet] = None) -> GradientPair:
    """
    Partial Frechet derivatives

        dZ/dL = 2 (lambda Pi L G22 - 2 (Theta1 E12 - E21^T Theta2)),
        dZ/dM = -2 (Theta2 E22 - E22^T Theta2),

    the latter on the space of symmetric matrices.
    """
    if gramians is None:
        _, gramians = evaluate(sys)
    _, e12, e21, e22 = _hankelian_blocks(sys, gramians)
    g22 = gramians.p_gram[sys.n:, sys.n:]
    cross = sys.theta1 @ e12 - e21.T @ sys.theta2
    grad_l = 2.0 * (sys.lam * sys.pi_weight @ sys.coupling @ g22 - 2.0 * cross)
    grad_m = -2.0 * (sys.theta2 @ e22 - e22.T @ sys.theta2)
    return GradientPair(grad_l=grad_l, grad_m=matlib.symmetrize(grad_m))


def stationarity(sys: PlantObserverSystem, gramians: Optional[GramianSet] = None) -> StationarityResidual:
    """Residuals of both optimality conditions, directly and through D = [Q, P]."""
    if gramians is None:
        _, gramians = evaluate(sys)
    n = sys.n
    _, e12, e21, e22 = _hankelian_blocks(sys, gramians)
    g22 = gramians.p_gram[n:, n:]
    half_penalty = 0.5 * sys.lam * sys.pi_weight @ sys.coupling
    res_l = sys.theta1 @ e12 - e21.T @ sys.theta2 - half_penalty @ g22
    res_m = sys.theta2 @ e22 - e22.T @ sys.theta2

    _, d12, _, d22 = matlib.split_blocks(gramians.lie_d, n)
    lie_p22 = g22 @ np.linalg.inv(sys.theta2)
    res_lie_l = d12 - half_penalty @ lie_p22
    return StationarityResidual(
        res_l=float(np.linalg.norm(res_l)),
        res_m=float(np.linalg.norm(res_m)),
        res_lie_l=float(np.linalg.norm(res_lie_l)),
        res_lie_m=float(np.linalg.norm(d22)),
    )


def _require_p22(sys: PlantObserverSystem, gramians: GramianSet) -> np.ndarray:
    g22 = gramians.p_gram[sys.n:, sys.n:]
    if not matlib.is_positive_definite(g22, SINGULAR_REL_TOL):
        raise DegenerateP22("observer block of the controllability Gramian is singular")
    return g22


def recover_coupling(gramians: GramianSet, sys: PlantObserverSystem, form: str = "standard") -> np.ndarray:
    """
    Coupling matrix satisfying the L-condition for the given Gramians:

        standard:  (2/lambda) Pi^{-1} (Theta1 E12 - E21^T Theta2) G22^{-1}
        lie:       (2/lambda) Pi^{-1} D12 P22^{-1},  P22 = G22 Theta2^{-1}

    Raises:
    -------
    DegenerateP22
        If G22 is not positive definite.
    """
    g22 = _require_p22(sys, gramians)
    pi_inv = np.linalg.inv(sys.pi_weight)
    if form == "standard":
        _, e12, e21, _ = _hankelian_blocks(sys, gramians)
        cross = sys.theta1 @ e12 - e21.T @ sys.theta2
        return (2.0 / sys.lam) * pi_inv @ cross @ np.linalg.inv(g22)
    if form == "lie":
        _, d12, _, _ = matlib.split_blocks(gramians.lie_d, sys.n)
        lie_p22 = g22 @ np.linalg.inv(sys.theta2)
        return (2.0 / sys.lam) * pi_inv @ d12 @ np.linalg.inv(lie_p22)
    raise ValueError(f"form must be 'standard' or 'lie', got {form!r}")


def _jacobi_sources(sys: PlantObserverSystem, gramians: GramianSet) -> np.ndarray:
    """(1/tau)[Sigma Theta^{-1}, Q] + [Theta C^T C, P]."""
    dyn = composite.assemble(sys)
    theta = sys.theta
    source_p = sys.sigma @ np.linalg.inv(theta)
    source_q = theta @ dyn.c_full.T @ dyn.c_full
    return (matlib.commutator(source_p, gramians.lie_q) / sys.tau
            + matlib.commutator(source_q, gramians.lie_p))


def jacobi_block_residual(sys: PlantObserverSystem, gramians: GramianSet,
                          include_d22: bool = True) -> float:
    """
    Norm of the (1,2) block of the Jacobi identity,

        J12/2 + D11 Theta1 L + D12 Theta2 M - Theta1 (K D12 + L D22),

    which vanishes for every admissible observer. With ``include_d22=False``
    the L D22 term is dropped, which leaves the identity linear in M that holds
    once D22 = 0.
    """
    n = sys.n
    sources = _jacobi_sources(sys, gramians)[:n, n:]
    d11, d12, _, d22 = matlib.split_blocks(gramians.lie_d, n)
    residual = (0.5 * sources + d11 @ sys.theta1 @ sys.coupling
                + d12 @ sys.theta2 @ sys.m_energy - sys.theta1 @ sys.k_energy @ d12)
    if include_d22:
        residual = residual - sys.theta1 @ sys.coupling @ d22
    return float(np.linalg.norm(residual))


def recover_observer_energy(gramians: GramianSet, sys: PlantObserverSystem,
                            include_d22: bool = False) -> EnergyRecovery:
    """
    Observer energy M = Theta2^{-1} D12^{-1} (Theta1 K D12 - D11 Theta1 L - J12/2) of a
    nondegenerate observer.

    The formula assumes D22 = 0; ``include_d22=True`` adds Theta1 L D22 inside the
    bracket, which recovers M for any nondegenerate admissible observer.

    Raises:
    -------
    DimensionMismatch
        If the plant and observer orders differ.
    DegenerateP22, DegenerateD12
        If the observer is degenerate.
    """
    n = sys.n
    if n != sys.nu:
        raise DimensionMismatch(f"energy recovery needs equal orders, got {n} and {sys.nu}")
    _require_p22(sys, gramians)
    d11, d12, _, d22 = matlib.split_blocks(gramians.lie_d, n)
    scale = np.linalg.norm(d12, 2)
    if scale == 0.0 or abs(np.linalg.det(d12)) <= DET_REL_TOL * scale ** n:
        raise DegenerateD12("block D12 of the Lie commutator is singular")

    sources = _jacobi_sources(sys, gramians)[:n, n:]
    bracket = sys.theta1 @ sys.k_energy @ d12 - d11 @ sys.theta1 @ sys.coupling - 0.5 * sources
    if include_d22:
        bracket = bracket + sys.theta1 @ sys.coupling @ d22
    raw = np.linalg.solve(sys.theta2, np.linalg.solve(d12, bracket))
    defect = float(np.linalg.norm(raw - raw.T))
    if defect > 1e-6 * max(1.0, np.linalg.norm(raw)):
        log.debug(f"recovered observer energy has symmetry defect {defect:.3e}")
    return EnergyRecovery(m_energy=matlib.symmetrize(raw), symmetry_defect=defect)


def covariance_relation_check(sys: PlantObserverSystem, gramians: GramianSet) -> CovarianceRelation:
    """
    Norms of the blocks of Theta E_{.2} - E_{2.}^T Theta2: the observer rows must vanish
    and the plant rows must equal (lambda/2) Pi L G22 at a stationary point.
    """
    n = sys.n
    theta_e = sys.theta @ gramians.hankelian
    relation = theta_e[:, n:] - gramians.hankelian[n:, :].T @ sys.theta2
    g22 = gramians.p_gram[n:, n:]
    upper = relation[:n] - 0.5 * sys.lam * sys.pi_weight @ sys.coupling @ g22
    return CovarianceRelation(lower=float(np.linalg.norm(relation[n:])),
                              upper=float(np.linalg.norm(upper)))


def _random_direction(sys: PlantObserverSystem, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    dl = rng.standard_normal((sys.n, sys.nu))
    dm = matlib.symmetrize(rng.standard_normal((sys.nu, sys.nu)))
    norm = np.sqrt(np.sum(dl ** 2) + np.sum(dm ** 2))
    return dl / norm, dm / norm


def finite_difference_check(sys: PlantObserverSystem, directions: int = 10,
                            rng: Optional[np.random.Generator] = None,
                            step: Optional[float] = None) -> float:
    """
    Largest relative error between central differences of the cost along random
    unit directions (dL, symmetric dM) and the analytic directional derivative.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    grad = gradients(sys)
    grad_norm = np.sqrt(np.sum(grad.grad_l ** 2) + np.sum(grad.grad_m ** 2))
    h = step if step is not None else 1e-5 * (1.0 + np.linalg.norm(sys.coupling))
    worst = 0.0
    for _ in range(directions):
        dl, dm = _random_direction(sys, rng)
        forward = sys.with_coupling(sys.coupling + h * dl).with_observer_energy(sys.m_energy + h * dm)
        backward = sys.with_coupling(sys.coupling - h * dl).with_observer_energy(sys.m_energy - h * dm)
        numeric = (cost(forward).total - cost(backward).total) / (2.0 * h)
        analytic = matlib.frobenius_inner(grad.grad_l, dl) + matlib.frobenius_inner(grad.grad_m, dm)
        scale = max(abs(analytic), 1e-6 * grad_norm, 1e-12)
        worst = max(worst, abs(numeric - analytic) / scale)
    return float(worst)


def gradient_descent(sys: PlantObserverSystem, max_iter: int = GD_MAX_ITER,
                     step: float = GD_INITIAL_STEP, tol: float = GD_GRAD_TOL,
                     optimize_m: bool = True) -> Tuple[PlantObserverSystem, List[float]]:
    """
    Plain gradient descent over (L, M) with step halving on cost increase or loss
    of admissibility.

    Returns:
    --------
    (PlantObserverSystem, list of float)
        The last accepted system and the cost after every accepted step.
    """
    current = sys
    history = [cost(current).total]
    for iteration in range(max_iter):
        grad = gradients(current)
        grad_m = grad.grad_m if optimize_m else np.zeros_like(grad.grad_m)
        grad_norm = np.sqrt(np.sum(grad.grad_l ** 2) + np.sum(grad_m ** 2))
        if grad_norm <= tol * (1.0 + abs(history[-1])):
            log.debug(f"gradient descent converged after {iteration} iterations")
            break
        while step > 1e-16:
            candidate = current.with_coupling(current.coupling - step * grad.grad_l)
            candidate = candidate.with_observer_energy(candidate.m_energy - step * grad_m)
            try:
                value = cost(candidate).total
            except (HorizonTooLong, NotHurwitz):
                value = np.inf
            if value < history[-1]:
                current = candidate
                history.append(value)
                step *= 2.0
                break
            step *= 0.5
        else:
            log.debug("gradient descent step underflow")
            break
    return current, history
