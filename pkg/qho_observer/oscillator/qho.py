"""
Closed quantum harmonic oscillator at the level of second moments.

The oscillator has CCR matrix Theta, energy matrix R and dynamics A = 2 Theta R.
Discounted second moments E_tau(X X^T) = P + i Theta are available by three routes:
the Lyapunov equation, the eigenbasis of A, and quadrature of the discounted integral.
"""

import itertools
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.linalg
from scipy.integrate import quad_vec

from config import (
    EIGENBASIS_COND_MAX, FREQ_REL_TOL, IMAG_SPECTRUM_TOL, SEARCH_SPACE_MAX,
    TOL_HAMILTONIAN, TOL_PSD, QUAD_EPSREL
)
from qho_observer.errors import (
    AllFrequenciesZero, BadCcr, BadCovariance, BadEnergy, DegenerateEigenbasis,
    DimensionMismatch, EigenFailure, HorizonTooLong, InvariantViolation, NotOscillatory,
    OddDimension, SearchSpaceTooLarge
)
from qho_observer.linalg import matlib
from qho_observer.logger import get_logger

log = get_logger("oscillator.qho")


@dataclass(frozen=True, eq=False)
class QhoModel:
    """CCR matrix, energy matrix and dynamics matrix of a closed oscillator."""
    theta: np.ndarray
    energy: np.ndarray
    dynamics: np.ndarray

    @property
    def n(self) -> int:
        return self.theta.shape[0]


@dataclass(frozen=True, eq=False)
class SpectralData:
    """
    Eigenbasis of the dynamics matrix, A = i V diag(omega) W with W = V^{-1}.

    The first n/2 frequencies are nonnegative and descending, the rest are their
    negatives, and ``c[k + n/2]`` is the complex conjugate of ``c[k]``.
    """
    v: np.ndarray
    w: np.ndarray
    omega: np.ndarray
    c: Tuple[np.ndarray, ...]

    @property
    def n(self) -> int:
        return self.v.shape[0]

    @property
    def positive_frequencies(self) -> np.ndarray:
        return self.omega[: self.n // 2]


@dataclass(frozen=True, eq=False)
class InitialMoments:
    """Initial covariance Sigma and the Hermitian second-moment matrix Gamma = Sigma + i Theta."""
    sigma: np.ndarray
    gamma: np.ndarray

    @classmethod
    def from_sigma(cls, sigma, theta) -> "InitialMoments":
        """
        Build initial moments, checking the uncertainty relation Sigma + i Theta >= 0.

        Raises:
        -------
        BadCovariance
            If sigma is not symmetric or the uncertainty relation fails.
        DimensionMismatch
            If the orders of sigma and theta differ.
        """
        sigma = matlib.as_matrix(sigma, "sigma", square=True)
        theta = np.asarray(theta, dtype=float)
        if sigma.shape != theta.shape:
            raise DimensionMismatch(f"sigma {sigma.shape} does not match theta {theta.shape}")
        if not matlib.is_symmetric(sigma):
            raise BadCovariance("sigma is not symmetric")
        sigma = matlib.symmetrize(sigma)
        gamma = sigma + 1j * theta
        lowest = matlib.min_eigenvalue(gamma)
        if lowest < -TOL_PSD * max(1.0, np.linalg.norm(gamma, 2)):
            raise BadCovariance(
                f"sigma + i theta is not positive semidefinite (min eigenvalue {lowest:.3e})"
            )
        return cls(sigma=sigma, gamma=gamma)


@dataclass(frozen=True, eq=False)
class DiscountedMoments:
    """Discounted second moments at horizon ``tau`` (np.inf for the time average)."""
    tau: float
    p_real: np.ndarray
    full: np.ndarray


def validate_ccr(theta, name: str = "theta") -> np.ndarray:
    """
    Check that ``theta`` is an antisymmetric nonsingular matrix of even order.

    Raises:
    -------
    OddDimension
        If the order is odd.
    BadCcr
        If theta is not antisymmetric or is singular.
    """
    theta = matlib.as_matrix(theta, name, square=True)
    if theta.shape[0] == 0 or theta.shape[0] % 2:
        raise OddDimension(f"{name} must have positive even order, got {theta.shape[0]}")
    if not matlib.is_antisymmetric(theta):
        raise BadCcr(f"{name} is not antisymmetric")
    singular_values = np.linalg.svd(theta, compute_uv=False)
    if singular_values[-1] <= 1e-12 * singular_values[0]:
        raise BadCcr(f"{name} is singular")
    return 0.5 * (theta - theta.T)


def build_model(theta, energy) -> QhoModel:
    """
    Build an oscillator with dynamics A = 2 Theta R.

    Raises:
    -------
    OddDimension, BadCcr
        From ``validate_ccr``.
    BadEnergy
        If energy is not symmetric.
    DimensionMismatch
        If the orders differ.
    """
    theta = validate_ccr(theta)
    energy = matlib.as_matrix(energy, "energy", square=True)
    if energy.shape != theta.shape:
        raise DimensionMismatch(f"energy {energy.shape} does not match theta {theta.shape}")
    if not matlib.is_symmetric(energy):
        raise BadEnergy("energy matrix is not symmetric")
    energy = matlib.symmetrize(energy)
    dynamics = 2.0 * theta @ energy
    defect = matlib.hamiltonian_defect(dynamics, theta)
    if defect > TOL_HAMILTONIAN * max(1.0, np.linalg.norm(dynamics) * np.linalg.norm(theta)):
        raise InvariantViolation(f"dynamics matrix is not Hamiltonian (defect {defect:.3e})")
    return QhoModel(theta=theta, energy=energy, dynamics=dynamics)


def frequency_tolerance(omega) -> float:
    """Absolute tolerance for frequency equality, relative to max |omega|."""
    omega = np.asarray(omega, dtype=float)
    return FREQ_REL_TOL * float(np.max(np.abs(omega))) if omega.size else 0.0


def _fix_phase(v: np.ndarray) -> np.ndarray:
    v = v / np.linalg.norm(v)
    magnitudes = np.abs(v)
    pivot = int(np.argmax(magnitudes > 1e-12 * magnitudes.max()))
    return v * (np.conj(v[pivot]) / magnitudes[pivot])


def spectral_decompose(model: QhoModel) -> SpectralData:
    """
    Diagonalize the dynamics matrix of an oscillator with R >= 0.

    Zero frequencies require a complete real null space of A; it is paired into
    complex conjugate columns so that the conjugate pairing of the rank-one
    matrices C_k holds throughout.

    Raises:
    -------
    NotOscillatory
        If the spectrum leaves the imaginary axis.
    DegenerateEigenbasis
        If the eigenvectors do not form a well-conditioned basis.
    EigenFailure
        If the eigenvalue solver fails.
    """
    a = model.dynamics
    n = model.n
    try:
        values, vectors = np.linalg.eig(a)
    except np.linalg.LinAlgError as e:
        raise EigenFailure(f"eigen-decomposition failed: {e}") from e

    scale = max(1.0, np.linalg.norm(a, 2))
    worst = float(np.max(np.abs(values.real)))
    if worst > IMAG_SPECTRUM_TOL * scale:
        raise NotOscillatory(f"dynamics spectrum has real parts up to {worst:.3e}")

    frequencies = values.imag
    tol = frequency_tolerance(frequencies)
    positive = np.flatnonzero(frequencies > tol)
    negative = np.flatnonzero(frequencies < -tol)
    if positive.size != negative.size:
        raise NotOscillatory("frequencies do not come in +/- pairs")
    positive = positive[np.argsort(-frequencies[positive], kind="stable")]
    zero_count = n - 2 * positive.size

    columns = [_fix_phase(vectors[:, k]) for k in positive]
    pos_omega = list(frequencies[positive])
    if zero_count:
        kernel = scipy.linalg.null_space(a)
        if kernel.shape[1] < zero_count:
            raise DegenerateEigenbasis(
                f"zero frequency has multiplicity {zero_count} but only "
                f"{kernel.shape[1]} eigenvectors"
            )
        for j in range(zero_count // 2):
            pair = (kernel[:, 2 * j] + 1j * kernel[:, 2 * j + 1]) / np.sqrt(2.0)
            columns.append(_fix_phase(pair))
            pos_omega.append(0.0)

    upper = np.column_stack(columns)
    v = np.hstack([upper, upper.conj()])
    omega = np.concatenate([pos_omega, -np.asarray(pos_omega)])
    condition = np.linalg.cond(v)
    if not np.isfinite(condition) or condition > EIGENBASIS_COND_MAX:
        raise DegenerateEigenbasis(f"eigenvector matrix is ill-conditioned (cond {condition:.3e})")
    w = np.linalg.inv(v)
    c = tuple(np.outer(v[:, k], w[k, :]) for k in range(n))
    log.debug(f"frequencies {np.round(omega[: n // 2], 6)}, cond(V) = {condition:.3e}")
    return SpectralData(v=v, w=w, omega=omega, c=c)


def _check_tau(tau: float) -> float:
    tau = float(tau)
    if not tau > 0.0:
        raise ValueError(f"tau must be positive, got {tau}")
    return tau


def discounted_moments_ale(model: QhoModel, init: InitialMoments, tau: float) -> DiscountedMoments:
    """
    Discounted moments P = (1/tau) L(A_tau, Sigma), A_tau = A - I/(2 tau).

    Raises:
    -------
    HorizonTooLong
        If tau exceeds 1/(2 max(0, abscissa(A))).
    """
    tau = _check_tau(tau)
    limit = matlib.admissible_horizon(model.dynamics)
    if tau >= limit:
        raise HorizonTooLong(f"tau = {tau:g} exceeds the admissible horizon {limit:g}")
    a_tau = model.dynamics - np.eye(model.n) / (2.0 * tau)
    p_real = matlib.solve_ale(a_tau, init.sigma) / tau
    return DiscountedMoments(tau=tau, p_real=p_real, full=p_real + 1j * model.theta)


def discounted_moments_spectral(spec: SpectralData, init: InitialMoments, tau: float) -> DiscountedMoments:
    """Discounted moments V (Phi_tau o W Gamma W^*) V^* with Phi_tau = 1/(1 - i(omega_j - omega_k) tau)."""
    tau = _check_tau(tau)
    gap = spec.omega[:, None] - spec.omega[None, :]
    phi = 1.0 / (1.0 - 1j * gap * tau)
    return _moments_from_weights(spec, init, phi, tau)


def infinite_horizon_moments(spec: SpectralData, init: InitialMoments,
                             tol_freq: Optional[float] = None) -> DiscountedMoments:
    """Time-averaged moments, with Phi the indicator of equal frequencies."""
    if tol_freq is None:
        tol_freq = frequency_tolerance(spec.omega)
    gap = np.abs(spec.omega[:, None] - spec.omega[None, :])
    phi = (gap <= tol_freq).astype(float)
    return _moments_from_weights(spec, init, phi, np.inf)


def _moments_from_weights(spec: SpectralData, init: InitialMoments, phi: np.ndarray,
                          tau: float) -> DiscountedMoments:
    inner = spec.w @ init.gamma @ spec.w.conj().T
    full = spec.v @ (phi * inner) @ spec.v.conj().T
    return DiscountedMoments(tau=tau, p_real=matlib.symmetrize(full.real), full=full)


def discounted_moments_quadrature(model: QhoModel, init: InitialMoments, tau: float) -> DiscountedMoments:
    """Discounted moments by adaptive quadrature of (1/tau) int e^{t A_tau} Sigma e^{t A_tau^T} dt."""
    tau = _check_tau(tau)
    a_tau = model.dynamics - np.eye(model.n) / (2.0 * tau)
    p_real = matlib.symmetrize(matlib.quadrature_ale(a_tau, init.sigma)) / tau
    return DiscountedMoments(tau=tau, p_real=p_real, full=p_real + 1j * model.theta)


def discounted_moments_frequency(model: QhoModel, init: InitialMoments, tau: float) -> DiscountedMoments:
    """
    Discounted moments from the frequency domain.

    P = (1/(2 pi tau)) int Re(F(s) Sigma F(s)^*) d omega along s = 1/(2 tau) + i omega,
    with F(s) = (sI - A)^{-1}. Accurate to about 1e-4; meant as a cross-check.
    """
    tau = _check_tau(tau)
    n = model.n
    identity = np.eye(n)
    shift = 1.0 / (2.0 * tau)

    def integrand(omega):
        resolvent = np.linalg.solve((shift + 1j * omega) * identity - model.dynamics, identity)
        return (resolvent @ init.sigma @ resolvent.conj().T).real.ravel()

    value, _ = quad_vec(integrand, -np.inf, np.inf, epsabs=1e-10, epsrel=QUAD_EPSREL * 1e4)
    p_real = matlib.symmetrize(value.reshape(n, n)) / (2.0 * np.pi * tau)
    return DiscountedMoments(tau=tau, p_real=p_real, full=p_real + 1j * model.theta)


def quadratic_form_average(spec: SpectralData, init: InitialMoments, pi_weight) -> float:
    """
    Time average of X^T Pi X.

    With pairwise distinct positive frequencies this is the sum over modes of
    V_k^* Pi V_k W_k Gamma W_k^* + V_k^T Pi conj(V_k) conj(W_k) Gamma W_k^T;
    otherwise trace(Pi E_inf(X X^T)) is returned.
    """
    pi_weight = matlib.as_matrix(pi_weight, "pi_weight", square=True)
    if pi_weight.shape != (spec.n, spec.n):
        raise DimensionMismatch(f"pi_weight {pi_weight.shape} does not match order {spec.n}")
    half = spec.n // 2
    upper = spec.positive_frequencies
    tol = frequency_tolerance(spec.omega)
    distinct = bool(np.all(upper > tol)) and all(
        abs(upper[j] - upper[k]) > tol for j in range(half) for k in range(j)
    )
    if not distinct:
        log.debug("repeated or zero frequencies, averaging through the full moment matrix")
        moments = infinite_horizon_moments(spec, init)
        return float(np.trace(pi_weight @ moments.p_real))

    total = 0.0 + 0.0j
    for k in range(half):
        vk = spec.v[:, k]
        wk = spec.w[k, :]
        total += (vk.conj() @ pi_weight @ vk) * (wk @ init.gamma @ wk.conj())
        total += (vk @ pi_weight @ vk.conj()) * (wk.conj() @ init.gamma @ wk)
    return float(total.real)


def torus_quadratic_average(spec: SpectralData, init: InitialMoments, pi_weight,
                            points_per_axis: int = 5) -> float:
    """
    Average of Re tr(Pi M(phi) Gamma M(phi)^T) over the torus of mode phases.

    M(phi) = 2 sum_k Re(e^{i phi_k} C_k) is the flow with independent phases. The
    integrand is a trigonometric polynomial of degree two per axis, so the uniform
    grid with at least three points per axis is exact.

    Raises:
    -------
    NotOscillatory
        If some mode has zero frequency.
    SearchSpaceTooLarge
        If the grid would exceed the configured size.
    """
    if points_per_axis < 3:
        raise ValueError(f"points_per_axis must be at least 3, got {points_per_axis}")
    half = spec.n // 2
    if np.any(spec.positive_frequencies <= frequency_tolerance(spec.omega)):
        raise NotOscillatory("torus averaging needs strictly positive frequencies")
    if points_per_axis ** half > SEARCH_SPACE_MAX:
        raise SearchSpaceTooLarge(f"{points_per_axis}^{half} torus points exceed {SEARCH_SPACE_MAX}")
    pi_weight = matlib.as_matrix(pi_weight, "pi_weight", square=True)
    angles = 2.0 * np.pi * np.arange(points_per_axis) / points_per_axis
    modes = spec.c[:half]

    total = 0.0
    for phases in itertools.product(angles, repeat=half):
        flow = sum(2.0 * (np.exp(1j * phase) * ck).real for phase, ck in zip(phases, modes))
        total += float(np.trace(pi_weight @ flow @ init.sigma @ flow.T))
    return total / points_per_axis ** half


def convergence_margin(spec: SpectralData) -> float:
    """
    tau_* = 1 / min |omega_j - omega_k| over the nonzero differences of all frequencies.

    Raises:
    -------
    AllFrequenciesZero
        If every difference vanishes.
    """
    return frequency_margin(spec.omega)


def frequency_margin(omega) -> float:
    omega = np.asarray(omega, dtype=float)
    tol = frequency_tolerance(omega)
    gaps = np.abs(omega[:, None] - omega[None, :]).ravel()
    gaps = gaps[gaps > tol]
    if gaps.size == 0:
        raise AllFrequenciesZero("all frequency differences vanish")
    return float(1.0 / gaps.min())


def incommensurability_diagnostic(omega, max_coeff: int,
                                  tol_freq: Optional[float] = None) -> Tuple[bool, Optional[Tuple[int, ...]]]:
    """
    Search integer vectors lambda with ||lambda||_inf <= max_coeff and |lambda . omega| < tol.

    Returns:
    --------
    (bool, tuple or None)
        True and None when no resonance is found; otherwise False and the witness
        with the smallest max-norm, sign-normalized so its first nonzero entry is positive.

    Raises:
    -------
    SearchSpaceTooLarge
        If (2 max_coeff + 1)^m exceeds the configured limit.
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if max_coeff < 1:
        raise ValueError(f"max_coeff must be at least 1, got {max_coeff}")
    m = omega.size
    width = 2 * max_coeff + 1
    if width ** m > SEARCH_SPACE_MAX:
        raise SearchSpaceTooLarge(f"{width}^{m} candidate vectors exceed {SEARCH_SPACE_MAX}")
    if tol_freq is None:
        tol_freq = frequency_tolerance(omega)

    coefficients = np.arange(-max_coeff, max_coeff + 1)
    if m > 1:
        rest = np.stack(np.meshgrid(*([coefficients] * (m - 1)), indexing="ij"), axis=-1)
        rest = rest.reshape(-1, m - 1)
        rest_sums = rest @ omega[1:]
    else:
        rest = np.zeros((1, 0), dtype=int)
        rest_sums = np.zeros(1)

    best = None
    for lead in coefficients:
        hits = np.flatnonzero(np.abs(lead * omega[0] + rest_sums) < tol_freq)
        for index in hits:
            candidate = np.concatenate([[lead], rest[index]]).astype(int)
            nonzero = np.flatnonzero(candidate)
            if nonzero.size == 0:
                continue
            if candidate[nonzero[0]] < 0:
                candidate = -candidate
            key = (int(np.max(np.abs(candidate))), int(np.sum(np.abs(candidate))), tuple(candidate))
            if best is None or key < best[0]:
                best = (key, tuple(int(x) for x in candidate))
    if best is None:
        return True, None
    log.debug(f"resonance witness {best[1]}")
    return False, best[1]


def symplectic_defect(model: QhoModel, t: float) -> float:
    """Frobenius norm of e^{tA} Theta e^{tA^T} - Theta."""
    flow = scipy.linalg.expm(t * model.dynamics)
    return float(np.linalg.norm(flow @ model.theta @ flow.T - model.theta))


def resolution_defect(spec: SpectralData) -> float:
    """Frobenius norm of sum_k C_k - I."""
    return float(np.linalg.norm(sum(spec.c) - np.eye(spec.n)))


def conjugate_pairing_defect(spec: SpectralData) -> float:
    """Largest Frobenius norm of conj(C_k) - C_{k + n/2}."""
    half = spec.n // 2
    return max(float(np.linalg.norm(spec.c[k].conj() - spec.c[k + half])) for k in range(half))


def isospectrality_defect(model: QhoModel, spec: SpectralData) -> float:
    """Largest distance between the eigenvalues of A and i * omega."""
    eigenvalues = np.linalg.eigvals(model.dynamics)
    drift = float(np.max(np.abs(eigenvalues.real)))
    mismatch = float(np.max(np.abs(np.sort(eigenvalues.imag) - np.sort(spec.omega))))
    return max(drift, mismatch)
