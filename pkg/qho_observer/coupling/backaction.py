"""
Back-action of a directly coupled observer on the plant.

Three families of estimates are provided for the deviation of the coupled
controllability Gramian from its uncoupled value diag(P1, P2):

- two-sided matrix bounds on G11 - P1 obtained from the block-bound lemma;
- small-gain Frobenius bounds from the vectorized Lyapunov equation, split into
  the diagonal unknowns (vec G11, vec G22) and the off-diagonal ones (vec G21, vec G12);
- frequency-domain gains of the plant-to-observer and observer-to-plant channels.
"""

from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.linalg

from config import (
    BOUND_SLACK, FREQ_GRID_SAMPLES, FREQ_REFINE_PASSES, FREQ_REFINE_POINTS, FREQ_SPAN_FACTOR,
    SINGULAR_REL_TOL
)
from qho_observer.errors import (
    BadCovariance, BadLemmaParameters, ResolventSingular, SingularP1, SmallGainViolated,
    UncoupledBlocksNotStable
)
from qho_observer.coupling import composite
from qho_observer.coupling.composite import CompositeDynamics, PlantObserverSystem
from qho_observer.linalg import matlib
from qho_observer.logger import get_logger

log = get_logger("coupling.backaction")


@dataclass(frozen=True, eq=False)
class SmallGainData:
    """Blocks of the vectorized Lyapunov equation: D1 x + E1 y = -s, D2 y + E2 x = 0."""
    d1: np.ndarray
    d2: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    delta1: np.ndarray
    delta2: np.ndarray
    eps: float

    @property
    def delta1_norm(self) -> float:
        return float(np.linalg.norm(self.delta1, 2)) if self.delta1.size else 0.0

    @property
    def delta2_norm(self) -> float:
        return float(np.linalg.norm(self.delta2, 2)) if self.delta2.size else 0.0


@dataclass(frozen=True)
class BackactionReport:
    """Observed Gramian deviations next to their bounds; bounds are NaN when inapplicable."""
    eps: float
    delta1_norm: float
    delta2_norm: float
    bound_p11: float
    bound_full: float
    observed_p11_dev: float
    observed_full_dev: float
    observed_weighted_dev: float
    kappa: float
    gamma1: float
    gamma2: float
    lemma_lower_slack: float
    lemma_upper_slack: float
    applicable: bool

    def violations(self, slack: float = BOUND_SLACK) -> List[str]:
        """Names of the bounds exceeded by the observed deviations."""
        found = []
        if self.applicable:
            if self.observed_p11_dev > self.bound_p11 + slack:
                found.append("bound_p11")
            if self.observed_full_dev > self.bound_full + slack:
                found.append("bound_full")
        if self.lemma_lower_slack < -slack:
            found.append("lemma_lower")
        if self.lemma_upper_slack < -slack:
            found.append("lemma_upper")
        return found

    def as_row(self) -> Dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class FrequencyGrid:
    """Sampling of the vertical line s = 1/(2 tau) + i omega."""
    omega_max: Optional[float] = None
    samples: int = FREQ_GRID_SAMPLES

    def __post_init__(self):
        if self.samples < FREQ_GRID_SAMPLES:
            raise ValueError(f"at least {FREQ_GRID_SAMPLES} samples are required, got {self.samples}")
        if self.omega_max is not None and not self.omega_max > 0:
            raise ValueError(f"omega_max must be positive, got {self.omega_max}")


def _discounted_blocks(sys: PlantObserverSystem,
                       dyn: Optional[CompositeDynamics]) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """A_tau, alpha_tau, B L and beta L^T."""
    if dyn is None:
        dyn = composite.assemble(sys)
    a, bl, beta_lt, alpha = dyn.blocks()
    shift = 1.0 / (2.0 * sys.tau)
    return a - shift * np.eye(sys.n), alpha - shift * np.eye(sys.nu), bl, beta_lt


def smallgain_data(sys: PlantObserverSystem, dyn: Optional[CompositeDynamics] = None) -> SmallGainData:
    """
    Build D1, D2, E1, E2, Delta_i = D_i^{-1} E_i and eps = ||Delta1|| ||Delta2||.

    Raises:
    -------
    UncoupledBlocksNotStable
        If A_tau or alpha_tau is not Hurwitz.
    """
    a_tau, alpha_tau, bl, beta_lt = _discounted_blocks(sys, dyn)
    for name, block in (("plant", a_tau), ("observer", alpha_tau)):
        if not matlib.stability_report(block).has_margin():
            raise UncoupledBlocksNotStable(f"discounted {name} block is not Hurwitz")
    n, nu = sys.n, sys.nu
    eye_n, eye_nu = np.eye(n), np.eye(nu)

    d1 = scipy.linalg.block_diag(matlib.kron_sum(a_tau, a_tau), matlib.kron_sum(alpha_tau, alpha_tau))
    d2 = scipy.linalg.block_diag(matlib.kron_sum(a_tau, alpha_tau), matlib.kron_sum(alpha_tau, a_tau))
    e1 = np.block([
        [np.kron(eye_n, bl), np.kron(bl, eye_n)],
        [np.kron(beta_lt, eye_nu), np.kron(eye_nu, beta_lt)],
    ])
    e2 = np.block([
        [np.kron(eye_n, beta_lt), np.kron(bl, eye_nu)],
        [np.kron(beta_lt, eye_n), np.kron(eye_nu, bl)],
    ])
    delta1 = np.linalg.solve(d1, e1)
    delta2 = np.linalg.solve(d2, e2)
    norm1 = float(np.linalg.norm(delta1, 2))
    norm2 = float(np.linalg.norm(delta2, 2))
    return SmallGainData(d1=d1, d2=d2, e1=e1, e2=e2, delta1=delta1, delta2=delta2, eps=norm1 * norm2)


def kappa(sys: PlantObserverSystem, p_gram: Optional[np.ndarray] = None,
          p1: Optional[np.ndarray] = None) -> float:
    """
    kappa = tau sqrt(r(P1^{-1} B N B^T)) with N = L G22 L^T the discounted covariance
    of the coupling signal.

    Raises:
    -------
    SingularP1
        If P1 is not positive definite.
    """
    if p_gram is None:
        p_gram = composite.controllability_gramian(sys, composite.assemble(sys))
    if p1 is None:
        p1, _ = composite.uncoupled_gramians(sys)
    if not matlib.is_positive_definite(p1, SINGULAR_REL_TOL):
        raise SingularP1("uncoupled plant Gramian P1 is singular")
    source = _coupling_source(sys, p_gram)
    return float(sys.tau * np.sqrt(max(matlib.relative_spectral_radius(source, p1), 0.0)))


def _coupling_source(sys: PlantObserverSystem, p_gram: np.ndarray) -> np.ndarray:
    """B L G22 L^T B^T."""
    b = 2.0 * sys.theta1
    g22 = p_gram[sys.n:, sys.n:]
    return matlib.symmetrize(b @ sys.coupling @ g22 @ sys.coupling.T @ b.T)


def lmi_deviation_bounds(sys: PlantObserverSystem, w: float, m: float,
                         p_gram: Optional[np.ndarray] = None,
                         p1: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Matrices (lower, upper) with lower <= G11 - P1 <= upper:

        lower = -L(A_s, P1/w + w B N B^T),   1/s = 1/tau + 1/w,
        upper =  L(A_t, P1/m + m B N B^T),   1/t = 1/tau - 1/m.

    Raises:
    -------
    BadLemmaParameters
        If w <= 0 or m <= tau.
    """
    if not w > 0:
        raise BadLemmaParameters(f"w must be positive, got {w}")
    if not m > sys.tau:
        raise BadLemmaParameters(f"m must exceed tau = {sys.tau:g}, got {m}")
    if p_gram is None:
        p_gram = composite.controllability_gramian(sys, composite.assemble(sys))
    if p1 is None:
        p1, _ = composite.uncoupled_gramians(sys)
    a = 2.0 * sys.theta1 @ sys.k_energy
    source = _coupling_source(sys, p_gram)
    identity = np.eye(sys.n)
    lower_horizon = w * sys.tau / (w + sys.tau)
    upper_horizon = m * sys.tau / (m - sys.tau)
    lower = -matlib.solve_ale(a - identity / (2.0 * lower_horizon), p1 / w + w * source)
    upper = matlib.solve_ale(a - identity / (2.0 * upper_horizon), p1 / m + m * source)
    return lower, upper


def kappa_asymptotic_band(sys: PlantObserverSystem, p_gram: Optional[np.ndarray] = None) -> np.ndarray:
    """First-order band 2 kappa r(P1 Sigma1^{-1}) P1 enclosing +/-(G11 - P1) for weak coupling."""
    if not matlib.is_positive_definite(sys.sigma1, SINGULAR_REL_TOL):
        raise BadCovariance("the asymptotic band needs a positive definite sigma1")
    p1, _ = composite.uncoupled_gramians(sys)
    k = kappa(sys, p_gram=p_gram, p1=p1)
    return 2.0 * k * matlib.relative_spectral_radius(p1, sys.sigma1) * p1


def deviation_bounds(sys: PlantObserverSystem, w: Optional[float] = None, m: Optional[float] = None,
                     with_gains: bool = True, grid: Optional[FrequencyGrid] = None) -> BackactionReport:
    """
    Compare the coupled Gramian with diag(P1, P2) and evaluate every bound.

    The matrix bounds use w = m = tau/kappa unless given; their semidefinite
    slacks are min eig(deviation - lower) and min eig(upper - deviation).
    When eps >= 1 the Frobenius bounds are reported as NaN and flagged inapplicable.
    """
    dyn = composite.assemble(sys)
    p_gram = composite.controllability_gramian(sys, dyn)
    p1, p2 = composite.uncoupled_gramians(sys)
    p_star = scipy.linalg.block_diag(p1, p2)
    deviation = p_gram - p_star
    p11_dev = deviation[:sys.n, :sys.n]

    weighted = np.nan
    if matlib.is_positive_semidefinite(sys.k_energy) and matlib.is_positive_semidefinite(sys.m_energy):
        weight = scipy.linalg.block_diag(matlib.sym_sqrt(sys.k_energy), matlib.sym_sqrt(sys.m_energy))
        weighted = float(np.linalg.norm(weight @ deviation @ weight))

    gains = smallgain_data(sys, dyn)
    d1, d2 = gains.delta1_norm, gains.delta2_norm
    star_norm = float(np.linalg.norm(p_star))
    applicable = gains.eps < 1.0
    if applicable:
        bound_p11 = gains.eps / (1.0 - gains.eps) * star_norm
        bound_full = np.sqrt(1.0 + d1 ** 2) / (1.0 - gains.eps) * d2 * star_norm
    else:
        log.warning(f"small-gain condition fails (eps = {gains.eps:.4g}); bounds are inapplicable")
        bound_p11 = bound_full = np.nan

    k = kappa(sys, p_gram=p_gram, p1=p1)
    lower_slack = upper_slack = 0.0
    if k > 0.0:
        w_eff = sys.tau / k if w is None else w
        m_eff = sys.tau / k if m is None else m
        if m_eff > sys.tau:
            lower, upper = lmi_deviation_bounds(sys, w_eff, m_eff, p_gram=p_gram, p1=p1)
            lower_slack = matlib.min_eigenvalue(p11_dev - lower)
            upper_slack = matlib.min_eigenvalue(upper - p11_dev)
        else:
            log.warning(f"kappa = {k:.4g} >= 1, matrix bounds need m > tau and are skipped")
            lower_slack = upper_slack = np.nan

    gamma1 = gamma2 = np.nan
    if with_gains:
        gamma1, gamma2 = frequency_gains(sys, dyn, grid)

    return BackactionReport(
        eps=gains.eps,
        delta1_norm=d1,
        delta2_norm=d2,
        bound_p11=float(bound_p11),
        bound_full=float(bound_full),
        observed_p11_dev=float(np.linalg.norm(p11_dev)),
        observed_full_dev=float(np.linalg.norm(deviation)),
        observed_weighted_dev=weighted,
        kappa=k,
        gamma1=float(gamma1),
        gamma2=float(gamma2),
        lemma_lower_slack=float(lower_slack),
        lemma_upper_slack=float(upper_slack),
        applicable=applicable,
    )


def _frequency_samples(resonances: np.ndarray, omega_max: float, samples: int) -> np.ndarray:
    linear = np.linspace(-omega_max, omega_max, samples // 2 + 1)
    logarithmic = np.logspace(-3.0, np.log10(omega_max), samples // 4)
    grid = np.concatenate([linear, logarithmic, -logarithmic, resonances, -resonances, [0.0]])
    return np.unique(grid[np.abs(grid) <= omega_max])


def _refined_supremum(gain, grid: np.ndarray) -> float:
    values = np.array([gain(omega) for omega in grid])
    index = int(np.argmax(values))
    best = float(values[index])
    lo = grid[max(index - 1, 0)]
    hi = grid[min(index + 1, grid.size - 1)]
    for _ in range(FREQ_REFINE_PASSES):
        points = np.linspace(lo, hi, FREQ_REFINE_POINTS)
        local = np.array([gain(omega) for omega in points])
        j = int(np.argmax(local))
        best = max(best, float(local[j]))
        lo = points[max(j - 1, 0)]
        hi = points[min(j + 1, points.size - 1)]
    return best


def frequency_gains(sys: PlantObserverSystem, dyn: Optional[CompositeDynamics] = None,
                    grid: Optional[FrequencyGrid] = None) -> Tuple[float, float]:
    """
    Suprema of ||(sI - A)^{-1} B L|| and ||(sI - alpha)^{-1} beta L^T|| along s = 1/(2 tau) + i omega.

    Raises:
    -------
    ResolventSingular
        If the line s = 1/(2 tau) + i omega meets the spectrum of A or alpha.
    """
    grid = grid or FrequencyGrid()
    shift = 1.0 / (2.0 * sys.tau)
    a = 2.0 * sys.theta1 @ sys.k_energy
    alpha = 2.0 * sys.theta2 @ sys.m_energy
    bl = 2.0 * sys.theta1 @ sys.coupling
    beta_lt = 2.0 * sys.theta2 @ sys.coupling.T

    spectra = np.concatenate([np.linalg.eigvals(a), np.linalg.eigvals(alpha)])
    if np.any(np.abs(spectra.real - shift) <= 1e-12 * max(1.0, shift)):
        raise ResolventSingular(f"s = {shift:g} + i omega meets the spectrum")
    resonances = np.unique(np.abs(spectra.imag))
    omega_max = grid.omega_max or max(FREQ_SPAN_FACTOR * float(resonances.max(initial=0.0)), 1.0)
    samples = _frequency_samples(resonances, omega_max, grid.samples)

    def channel(dynamics, gain_matrix):
        identity = np.eye(dynamics.shape[0])

        def norm_at(omega):
            transfer = np.linalg.solve((shift + 1j * omega) * identity - dynamics, gain_matrix)
            return float(np.linalg.norm(transfer, 2))
        return norm_at

    if not np.any(sys.coupling):
        return 0.0, 0.0
    gamma1 = _refined_supremum(channel(a, bl), samples)
    gamma2 = _refined_supremum(channel(alpha, beta_lt), samples)
    log.debug(f"frequency gains {gamma1:.6g}, {gamma2:.6g} on {samples.size} samples")
    return gamma1, gamma2


def estimation_error_lower_bound(sys: PlantObserverSystem) -> float:
    """
    Lower bound on the discounted mean square estimation error:

        sum_k tr(S_k P_k S_k^T) - sqrt(tr((S S^T)^2)) sqrt(1 + ||Delta1||^2)/(1 - eps) ||Delta2|| ||G_*||.

    Raises:
    -------
    SmallGainViolated
        If eps >= 1.
    """
    gains = smallgain_data(sys)
    if gains.eps >= 1.0:
        raise SmallGainViolated(f"eps = {gains.eps:.4g} is not below one")
    p1, p2 = composite.uncoupled_gramians(sys)
    base = float(np.trace(sys.s1 @ p1 @ sys.s1.T) + np.trace(sys.s2 @ p2 @ sys.s2.T))
    if gains.eps == 0.0 and gains.delta2_norm == 0.0:
        return base
    weight = sys.s1 @ sys.s1.T + sys.s2 @ sys.s2.T
    star_norm = float(np.linalg.norm(scipy.linalg.block_diag(p1, p2)))
    spread = np.sqrt(1.0 + gains.delta1_norm ** 2) / (1.0 - gains.eps) * gains.delta2_norm * star_norm
    return base - float(np.sqrt(np.trace(weight @ weight))) * spread


def block_bound_slack(n_mat, w: Optional[float] = None) -> float:
    """
    Smallest eigenvalue of bound -/+ (N12 + N21) for a positive semidefinite N split in halves.

    The bound is w N11 + N22 / w when ``w`` is given and 2 sqrt(r(N11^{-1} N22)) N11 otherwise.
    """
    n_mat = matlib.as_matrix(n_mat, "N", square=True)
    half = n_mat.shape[0] // 2
    n11, n12, n21, n22 = matlib.split_blocks(n_mat, half)
    cross = matlib.symmetrize(n12 + n21)
    if w is None:
        if not matlib.is_positive_definite(n11):
            raise BadLemmaParameters("block N11 must be positive definite")
        bound = 2.0 * np.sqrt(matlib.relative_spectral_radius(n22, n11)) * n11
    else:
        if not w > 0:
            raise BadLemmaParameters(f"w must be positive, got {w}")
        bound = w * n11 + n22 / w
    return min(matlib.min_eigenvalue(bound - cross), matlib.min_eigenvalue(bound + cross))
