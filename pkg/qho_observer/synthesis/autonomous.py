"""
Observers with autonomous estimation-error dynamics.

Plant and observer share the CCR matrix Theta0 and the weight S0, the observer
copies the plant energy (M = K) and the coupling L is symmetric. The error
E = S0 (X - xi) then evolves on its own with dynamics A_hat = 2 S0 Theta0 (K - L) S0^{-1}.

The restricted optimality condition is written as the fixed-point problem
L = mu f(mu, L) in mu = 1/lambda and traced from L = 0 at mu = 0 by
predictor-corrector continuation.
"""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from config import (
    CORRECTOR_DAMPING, CORRECTOR_MAX_ITER, CORRECTOR_TOL, FD_REL_STEP, HOMOTOPY_MIN_STEPS,
    HOMOTOPY_STEPS, MIN_MU_STEP, SINGULAR_REL_TOL, TOL_SYMMETRY
)
from qho_observer.coupling import composite
from qho_observer.coupling.composite import PlantObserverSystem
from qho_observer.errors import (
    AdmissibilityLost, BadEnergy, BadWeights, ContinuationStalled, DegenerateP2, DegenerateP22,
    DimensionMismatch, HorizonTooLong, InvariantViolation, NotHurwitz, NumericalError,
    StructureViolated
)
from qho_observer.linalg import matlib
from qho_observer.logger import get_logger
from qho_observer.oscillator import qho
from qho_observer.synthesis import stationarity

log = get_logger("synthesis.autonomous")


@dataclass(frozen=True, eq=False)
class AutonomousObserverProblem:
    """Plant data of the autonomous class; the observer is fixed up to the coupling L."""
    theta0: np.ndarray
    k_energy: np.ndarray
    s0: np.ndarray
    sigma1: np.ndarray
    sigma2: np.ndarray
    pi_weight: np.ndarray
    tau: float

    def __post_init__(self):
        theta0 = qho.validate_ccr(self.theta0, "theta0")
        n = theta0.shape[0]
        k_energy = matlib.as_matrix(self.k_energy, "K", square=True)
        if k_energy.shape != (n, n):
            raise DimensionMismatch(f"K must be {n}x{n}, got {k_energy.shape}")
        if not matlib.is_symmetric(k_energy):
            raise BadEnergy("K is not symmetric")
        k_energy = matlib.symmetrize(k_energy)
        if not matlib.is_positive_definite(k_energy):
            raise BadEnergy("K is not positive definite")
        s0 = matlib.as_matrix(self.s0, "S0", square=True)
        if s0.shape != (n, n):
            raise DimensionMismatch(f"S0 must be {n}x{n}, got {s0.shape}")
        if abs(np.linalg.det(s0)) <= SINGULAR_REL_TOL * max(1.0, np.linalg.norm(s0, 2)) ** n:
            raise BadWeights("S0 is singular")
        object.__setattr__(self, "theta0", theta0)
        object.__setattr__(self, "k_energy", k_energy)
        object.__setattr__(self, "s0", s0)
        object.__setattr__(self, "tau", float(self.tau))
        # sigma, Pi and tau are checked by the composite system
        template = self.system(np.zeros((n, n)), 1.0)
        for name in ("sigma1", "sigma2", "pi_weight"):
            object.__setattr__(self, name, getattr(template, name))

    @property
    def n(self) -> int:
        return self.theta0.shape[0]

    def system(self, coupling, lam: float) -> PlantObserverSystem:
        """Composite plant-observer system with M = K, S1 = S2 = S0 and the given L, lambda."""
        return PlantObserverSystem(
            theta1=self.theta0, theta2=self.theta0, k_energy=self.k_energy, m_energy=self.k_energy,
            coupling=coupling, sigma1=self.sigma1, sigma2=self.sigma2, s1=self.s0, s2=self.s0,
            pi_weight=self.pi_weight, lam=lam, tau=self.tau,
        )


@dataclass(frozen=True, eq=False)
class ErrorDynamics:
    a_hat: np.ndarray
    theta_hat: np.ndarray
    r_hat: np.ndarray


@dataclass(frozen=True)
class PointEvaluation:
    """Cost split at (mu, L); the penalty is lambda E(eta^T Pi eta) with lambda = 1/mu."""
    total: float
    error_ms: float
    penalty: float
    admissible: bool


@dataclass
class SynthesisTrace:
    """Accepted points of a homotopy run, one entry per grid value of mu."""
    mu_grid: List[float] = field(default_factory=list)
    l_path: List[np.ndarray] = field(default_factory=list)
    cost_path: List[float] = field(default_factory=list)
    error_path: List[float] = field(default_factory=list)
    penalty_path: List[float] = field(default_factory=list)
    residual_path: List[float] = field(default_factory=list)
    admissibility_path: List[bool] = field(default_factory=list)
    stalled_at: Optional[float] = None
    reason: Optional[str] = None

    def append(self, mu: float, coupling: np.ndarray, point: PointEvaluation, residual: float) -> None:
        self.mu_grid.append(float(mu))
        self.l_path.append(coupling)
        self.cost_path.append(point.total)
        self.error_path.append(point.error_ms)
        self.penalty_path.append(point.penalty)
        self.residual_path.append(float(residual))
        self.admissibility_path.append(point.admissible)

    @property
    def completed(self) -> bool:
        return self.reason is None

    def raise_for_status(self) -> None:
        """Raise the error that stopped the continuation, if any."""
        if self.reason is None:
            return
        reached = self.mu_grid[-1] if self.mu_grid else 0.0
        if self.reason == "admissibility":
            raise AdmissibilityLost(f"continuation left the admissible region at mu = {self.stalled_at:g}",
                                    reached_mu=reached)
        raise ContinuationStalled(f"continuation stalled at mu = {self.stalled_at:g}: {self.reason}",
                                  reached_mu=reached)

    def slope_defect(self, l_prime: np.ndarray, fitted: bool = True) -> float:
        """
        Distance of the slope at the origin from L'; NaN when the trace is too short.

        The fitted slope uses the first two positive grid points h and 2h of the
        uniform grid. With ``fitted=False`` the raw ratio L_h / h is compared.
        """
        positive = [(mu, coupling) for mu, coupling in zip(self.mu_grid, self.l_path) if mu > 0.0]
        if not positive:
            return float("nan")
        mu, coupling = positive[0]
        if not fitted:
            return float(np.linalg.norm(coupling / mu - l_prime))
        if len(positive) < 2 or not np.isclose(positive[1][0], 2.0 * mu):
            return float("nan")
        return float(np.linalg.norm(fitted_slope(mu, coupling, positive[1][1]) - l_prime))

    def to_frame(self) -> pd.DataFrame:
        """One row per accepted mu with the upper-triangular entries of L (1-based names)."""
        rows = []
        for mu, coupling, total, error, penalty, residual, admissible in zip(
                self.mu_grid, self.l_path, self.cost_path, self.error_path,
                self.penalty_path, self.residual_path, self.admissibility_path):
            row = {"mu": mu}
            n = coupling.shape[0]
            for i in range(n):
                for j in range(i, n):
                    row[f"L_{i + 1}_{j + 1}"] = coupling[i, j]
            row.update({
                "error_ms": error,
                "penalty_term": penalty,
                "total": total,
                "residual": residual,
                "admissible": int(admissible),
            })
            rows.append(row)
        return pd.DataFrame(rows)


def structure_check(k_energy, m_energy, coupling, tol: float = TOL_SYMMETRY) -> bool:
    """
    True iff M = K and L = L^T, the condition for autonomous error dynamics.

    Raises:
    -------
    DimensionMismatch
        If plant and observer orders differ.
    """
    k_energy = matlib.as_matrix(k_energy, "K", square=True)
    m_energy = matlib.as_matrix(m_energy, "M", square=True)
    coupling = matlib.as_matrix(coupling, "L")
    if m_energy.shape != k_energy.shape or coupling.shape != k_energy.shape:
        raise DimensionMismatch(
            f"K {k_energy.shape}, M {m_energy.shape} and L {coupling.shape} must have the same order"
        )
    scale = max(1.0, np.linalg.norm(k_energy))
    same_energy = np.linalg.norm(m_energy - k_energy) <= tol * scale
    return bool(same_energy and matlib.is_symmetric(coupling, tol))


def error_dynamics(prob: AutonomousObserverProblem, coupling) -> ErrorDynamics:
    """
    Error dynamics A_hat = 2 Theta_hat R_hat with Theta_hat = 2 S0 Theta0 S0^T and
    R_hat = (1/2) S0^{-T} (K - L) S0^{-1}.

    Raises:
    -------
    StructureViolated
        If L is not symmetric.
    InvariantViolation
        If S A != A_hat S for S = [S0, -S0].
    """
    if not structure_check(prob.k_energy, prob.k_energy, coupling):
        raise StructureViolated("coupling matrix is not symmetric")
    coupling = matlib.symmetrize(np.asarray(coupling, dtype=float))
    s0_inv = np.linalg.inv(prob.s0)
    theta_hat = 2.0 * prob.s0 @ prob.theta0 @ prob.s0.T
    r_hat = matlib.symmetrize(0.5 * s0_inv.T @ (prob.k_energy - coupling) @ s0_inv)
    a_hat = 2.0 * theta_hat @ r_hat

    a_full = 2.0 * np.block([
        [prob.theta0 @ prob.k_energy, prob.theta0 @ coupling],
        [prob.theta0 @ coupling, prob.theta0 @ prob.k_energy],
    ])
    s = np.hstack([prob.s0, -prob.s0])
    defect = np.linalg.norm(s @ a_full - a_hat @ s)
    if defect > 1e-10 * max(1.0, np.linalg.norm(a_full)):
        raise InvariantViolation(f"error dynamics do not intertwine the composite dynamics ({defect:.3e})")
    return ErrorDynamics(a_hat=a_hat, theta_hat=theta_hat, r_hat=r_hat)


def _composite_gramians(prob: AutonomousObserverProblem, mu: float,
                        coupling: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Controllability and observability Gramians of the class, with the penalty weighted by 1/mu."""
    n = prob.n
    theta = np.kron(np.eye(2), prob.theta0)
    energy = np.block([[prob.k_energy, coupling], [coupling, prob.k_energy]])
    a_full = 2.0 * theta @ energy
    if matlib.admissible_horizon(a_full) <= prob.tau:
        raise HorizonTooLong(f"tau = {prob.tau:g} is not admissible for the current coupling")
    a_tau = a_full - np.eye(2 * n) / (2.0 * prob.tau)
    sigma = np.block([[prob.sigma1, np.zeros((n, n))], [np.zeros((n, n)), prob.sigma2]])
    s = np.hstack([prob.s0, -prob.s0])
    weight = s.T @ s
    if mu > 0.0:
        weight = weight.copy()
        weight[n:, n:] += coupling @ prob.pi_weight @ coupling / mu
    p_gram = matlib.solve_ale(a_tau, sigma) / prob.tau
    q_gram = matlib.solve_ale(a_tau.T, weight)
    return p_gram, q_gram


def fixed_point_map(prob: AutonomousObserverProblem, mu: float, coupling) -> np.ndarray:
    """
    f(mu, L) = -8 Pi^{-1} L(G22 Pi^{-1}, S(S(Theta E)_12)) Pi^{-1}, where S is the symmetric
    part and E the Hankelian of the class at coupling L and lambda = 1/mu.

    Stationary couplings of the class are the solutions of L = mu f(mu, L). At mu = 0
    the penalty part of the observability weight is taken as zero.

    Raises:
    -------
    DegenerateP22
        If the observer block of the controllability Gramian is singular.
    HorizonTooLong
        If tau is not admissible at L.
    """
    n = prob.n
    coupling = matlib.symmetrize(np.asarray(coupling, dtype=float))
    p_gram, q_gram = _composite_gramians(prob, mu, coupling)
    g22 = p_gram[n:, n:]
    if not matlib.is_positive_definite(g22, SINGULAR_REL_TOL):
        raise DegenerateP22("observer block of the controllability Gramian is singular")
    theta_e = np.kron(np.eye(2), prob.theta0) @ q_gram @ p_gram
    source = matlib.symmetrize(0.5 * (theta_e[:n, n:] + theta_e[n:, :n].T))
    pi_inv = np.linalg.inv(prob.pi_weight)
    # G22 Pi^{-1} has a positive spectrum, so the equation is uniquely solvable
    reduced = matlib.solve_ale(g22 @ pi_inv, source, require_hurwitz=False)
    return matlib.symmetrize(-8.0 * pi_inv @ reduced @ pi_inv)


def weak_coupling_direction(prob: AutonomousObserverProblem) -> np.ndarray:
    """
    Slope L' of the optimal coupling at mu = 0:

        L' = 2 Pi^{-1} L(P2 Pi^{-1}, Theta0 Q0 (P1 + P2) - (P1 + P2) Q0 Theta0) Pi^{-1},

    with P_k the uncoupled Gramians, Q0 = S0^T L(A_hat_tau^T, I) S0 and
    A_hat = 2 S0 Theta0 K S0^{-1}.

    Raises:
    -------
    DegenerateP2
        If P2 is not positive definite.
    """
    sys = prob.system(np.zeros((prob.n, prob.n)), 1.0)
    p1, p2 = composite.uncoupled_gramians(sys)
    if not matlib.is_positive_definite(p2, SINGULAR_REL_TOL):
        raise DegenerateP2("uncoupled observer Gramian is singular")
    a_hat = error_dynamics(prob, np.zeros((prob.n, prob.n))).a_hat
    a_hat_tau = a_hat - np.eye(prob.n) / (2.0 * prob.tau)
    q_hat = matlib.solve_ale(a_hat_tau.T, np.eye(prob.n))
    q0 = prob.s0.T @ q_hat @ prob.s0
    total = p1 + p2
    source = prob.theta0 @ q0 @ total - total @ q0 @ prob.theta0
    pi_inv = np.linalg.inv(prob.pi_weight)
    reduced = matlib.solve_ale(p2 @ pi_inv, source, require_hurwitz=False)
    return matlib.symmetrize(2.0 * pi_inv @ reduced @ pi_inv)


def evaluate_point(prob: AutonomousObserverProblem, mu: float, coupling) -> PointEvaluation:
    """Mean square error, penalty and total cost at (mu, L)."""
    n = prob.n
    coupling = matlib.symmetrize(np.asarray(coupling, dtype=float))
    energy = np.block([[prob.k_energy, coupling], [coupling, prob.k_energy]])
    positive = matlib.is_positive_definite(energy)
    try:
        p_gram, _ = _composite_gramians(prob, mu, coupling)
    except (HorizonTooLong, NotHurwitz):
        return PointEvaluation(total=np.nan, error_ms=np.nan, penalty=np.nan, admissible=False)
    s = np.hstack([prob.s0, -prob.s0])
    error_ms = matlib.frobenius_inner(s.T @ s, p_gram)
    penalty = 0.0
    if mu > 0.0:
        penalty = float(np.trace(prob.pi_weight @ coupling @ p_gram[n:, n:] @ coupling)) / mu
    return PointEvaluation(total=error_ms + penalty, error_ms=error_ms, penalty=penalty,
                           admissible=bool(positive))


def restricted_gradient(prob: AutonomousObserverProblem, mu: float, coupling) -> np.ndarray:
    """Symmetric part of dZ/dL at lambda = 1/mu, zero exactly at solutions of L = mu f(mu, L)."""
    if mu <= 0.0:
        raise ValueError(f"mu must be positive, got {mu}")
    sys = prob.system(coupling, 1.0 / mu)
    return matlib.symmetrize(stationarity.gradients(sys).grad_l)


# Continuation

def _to_coords(m: np.ndarray) -> np.ndarray:
    return m[np.triu_indices(m.shape[0])]


def _from_coords(v: np.ndarray, n: int) -> np.ndarray:
    m = np.zeros((n, n))
    rows, cols = np.triu_indices(n)
    m[rows, cols] = v
    m[cols, rows] = v
    return m


def _coupling_jacobian(func: Callable[[np.ndarray], np.ndarray], coupling: np.ndarray) -> np.ndarray:
    """Central-difference Jacobian of a symmetric-matrix map in upper-triangular coordinates."""
    n = coupling.shape[0]
    base = _to_coords(coupling)
    h = FD_REL_STEP * (1.0 + np.linalg.norm(coupling))
    columns = []
    for k in range(base.size):
        delta = np.zeros_like(base)
        delta[k] = h
        forward = func(_from_coords(base + delta, n))
        backward = func(_from_coords(base - delta, n))
        columns.append(_to_coords(forward - backward) / (2.0 * h))
    return np.column_stack(columns)


def _residual(prob: AutonomousObserverProblem, mu: float, coupling: np.ndarray) -> np.ndarray:
    return coupling - mu * fixed_point_map(prob, mu, coupling)


def _safe_norm(prob, mu, coupling) -> float:
    try:
        return float(np.linalg.norm(_residual(prob, mu, coupling)))
    except (NumericalError, np.linalg.LinAlgError):
        return np.inf


def _predict(prob: AutonomousObserverProblem, mu: float, coupling: np.ndarray) -> np.ndarray:
    """dL/dmu = (I - mu d_L f)^{-1} (f + mu d_mu f); equals f(0, 0) at the origin."""
    f_value = fixed_point_map(prob, mu, coupling)
    if mu == 0.0:
        return f_value
    h = min(FD_REL_STEP * (1.0 + mu), 0.5 * mu)
    d_mu = (fixed_point_map(prob, mu + h, coupling) - fixed_point_map(prob, mu - h, coupling)) / (2.0 * h)
    jac = _coupling_jacobian(lambda c: fixed_point_map(prob, mu, c), coupling)
    system = np.eye(jac.shape[0]) - mu * jac
    rhs = _to_coords(f_value + mu * d_mu)
    return _from_coords(np.linalg.solve(system, rhs), coupling.shape[0])


def _correct(prob: AutonomousObserverProblem, mu: float, guess: np.ndarray) -> Optional[np.ndarray]:
    """Damped fixed-point iteration with a Newton fallback on g(L) = L - mu f(mu, L)."""
    current = guess
    norm = _safe_norm(prob, mu, current)
    for _ in range(CORRECTOR_MAX_ITER):
        if norm <= CORRECTOR_TOL * (1.0 + np.linalg.norm(current)):
            return current
        if not np.isfinite(norm):
            return None
        step = -_residual(prob, mu, current)
        improved = False
        for damping in CORRECTOR_DAMPING:
            candidate = current + damping * step
            candidate_norm = _safe_norm(prob, mu, candidate)
            if candidate_norm < 0.5 * norm:
                current, norm, improved = candidate, candidate_norm, True
                break
        if improved:
            continue
        try:
            jac = _coupling_jacobian(lambda c: _residual(prob, mu, c), current)
            newton = _from_coords(np.linalg.solve(jac, _to_coords(step)), current.shape[0])
        except (NumericalError, np.linalg.LinAlgError):
            return None
        for damping in CORRECTOR_DAMPING:
            candidate = current + damping * newton
            candidate_norm = _safe_norm(prob, mu, candidate)
            if candidate_norm < norm:
                current, norm, improved = candidate, candidate_norm, True
                break
        if not improved:
            return None
    return current if norm <= CORRECTOR_TOL * (1.0 + np.linalg.norm(current)) else None


def _admissible(prob: AutonomousObserverProblem, coupling: np.ndarray) -> bool:
    energy = np.block([[prob.k_energy, coupling], [coupling, prob.k_energy]])
    if not matlib.is_positive_definite(energy):
        return False
    a_full = 2.0 * np.kron(np.eye(2), prob.theta0) @ energy
    return matlib.admissible_horizon(a_full) > prob.tau


def homotopy_solve(prob: AutonomousObserverProblem, mu_max: float, steps: int = HOMOTOPY_STEPS,
                   progress: bool = False) -> SynthesisTrace:
    """
    Trace the stationary coupling L_mu on the uniform grid k mu_max / steps, k = 0..steps.

    Each grid interval is crossed by Euler prediction and correction, halving the
    substep when the corrector fails. The run stops early, with ``reason`` set,
    when the substep falls below the minimum or the path leaves the admissible
    region (composite energy not positive definite or tau no longer admissible).
    """
    if not (np.isfinite(mu_max) and mu_max >= 0.0):
        raise ValueError(f"mu_max must be a nonnegative real, got {mu_max}")
    if mu_max > 0.0 and steps < HOMOTOPY_MIN_STEPS:
        raise ValueError(f"steps must be at least {HOMOTOPY_MIN_STEPS}, got {steps}")

    n = prob.n
    trace = SynthesisTrace()
    coupling = np.zeros((n, n))
    mu = 0.0
    trace.append(mu, coupling, evaluate_point(prob, mu, coupling), 0.0)
    if mu_max == 0.0:
        return trace

    grid = [k * mu_max / steps for k in range(1, steps + 1)]
    with tqdm(total=steps, desc="Homotopy continuation", disable=not progress) as pbar:
        for target in grid:
            substep = target - mu
            while target - mu > 1e-12 * target:
                substep = min(substep, target - mu)
                if substep < MIN_MU_STEP:
                    trace.stalled_at, trace.reason = mu, "corrector failed below the minimum step"
                    log.warning(f"continuation stalled at mu = {mu:g}")
                    return trace
                try:
                    guess = coupling + substep * _predict(prob, mu, coupling)
                except (NumericalError, np.linalg.LinAlgError) as e:
                    log.debug(f"predictor failed at mu = {mu:g}: {e}")
                    guess = coupling
                corrected = _correct(prob, mu + substep, matlib.symmetrize(guess))
                if corrected is None:
                    substep *= 0.5
                    continue
                mu += substep
                coupling = matlib.symmetrize(corrected)
                substep *= 2.0
                if not _admissible(prob, coupling):
                    trace.append(mu, coupling, evaluate_point(prob, mu, coupling),
                                 _safe_norm(prob, mu, coupling))
                    trace.stalled_at, trace.reason = mu, "admissibility"
                    log.warning(f"continuation left the admissible region at mu = {mu:g}")
                    return trace
            mu = target
            residual = _safe_norm(prob, mu, coupling)
            trace.append(mu, coupling, evaluate_point(prob, mu, coupling), residual)
            log.debug(f"mu = {mu:.6g}: residual {residual:.3e}")
            pbar.update(1)
    return trace


def fitted_slope(mu: float, l_mu: np.ndarray, l_2mu: np.ndarray) -> np.ndarray:
    """Richardson estimate 2 L_mu / mu - L_2mu / (2 mu) of dL/dmu at 0, exact up to O(mu^2)."""
    return 2.0 * l_mu / mu - l_2mu / (2.0 * mu)


def slope_defect(prob: AutonomousObserverProblem, mu: float = 0.01,
                 l_prime: Optional[np.ndarray] = None, steps: int = HOMOTOPY_MIN_STEPS,
                 fitted: bool = True) -> float:
    """
    ||slope - L'|| with the slope fitted from L_mu and L_2mu.

    With ``fitted=False`` the raw ratio L_mu / mu is used; it still carries the
    O(mu) curvature of the path.
    """
    if mu <= 0.0:
        raise ValueError(f"mu must be positive, got {mu}")
    if l_prime is None:
        l_prime = weak_coupling_direction(prob)
    trace = homotopy_solve(prob, 2.0 * mu, steps=2 * steps)
    trace.raise_for_status()
    l_mu, l_2mu = trace.l_path[steps], trace.l_path[-1]
    slope = fitted_slope(mu, l_mu, l_2mu) if fitted else l_mu / mu
    return float(np.linalg.norm(slope - l_prime))


def slope_defects(prob: AutonomousObserverProblem, mus: Sequence[float] = (0.04, 0.02, 0.01),
                  fitted: bool = True) -> List[float]:
    l_prime = weak_coupling_direction(prob)
    return [slope_defect(prob, mu, l_prime, fitted=fitted) for mu in mus]
