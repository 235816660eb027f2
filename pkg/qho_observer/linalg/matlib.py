"""
Dense-matrix foundations shared by every other module.

The algebraic Lyapunov equation (ALE) operator used throughout is

    L(alpha, beta) = gamma  with  alpha gamma + gamma alpha^T + beta = 0,

which for a Hurwitz alpha is the integral of e^{t alpha} beta e^{t alpha^T} over t >= 0.
Vectorization stacks columns, so vec(a x + x b^T) = kron_sum(b, a) vec(x).
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np
import scipy.linalg
from scipy.integrate import quad_vec

from config import (
    TOL_HURWITZ, TOL_SYMMETRY, QUAD_CUTOFF, QUAD_EPSABS, QUAD_EPSREL, QUAD_LIMIT, QUAD_MAX_DOUBLINGS,
    QUAD_WINDOW_CYCLES
)
from qho_observer.errors import DimensionMismatch, EigenFailure, NotHurwitz, QuadratureFailed
from qho_observer.logger import get_logger

log = get_logger("linalg.matlib")

ALE_METHODS = ("kron", "schur")


@dataclass(frozen=True)
class StabilityReport:
    """Spectral abscissa of a square matrix and the derived Hurwitz flag."""
    spectral_abscissa: float
    spectral_radius_exp: float
    is_hurwitz: bool

    def has_margin(self, tol_hurwitz: float = TOL_HURWITZ) -> bool:
        """True when the abscissa is below -tol_hurwitz."""
        return self.spectral_abscissa < -tol_hurwitz


def as_matrix(m, name: str = "matrix", square: bool = False, dtype=float) -> np.ndarray:
    """
    Convert ``m`` to a finite two-dimensional array.

    Raises:
    -------
    DimensionMismatch
        If ``m`` is not two-dimensional, not square when required, or has
        non-finite entries.
    """
    arr = np.array(m, dtype=dtype)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be a matrix, got an array with {arr.ndim} dimensions")
    if square and arr.shape[0] != arr.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DimensionMismatch(f"{name} has non-finite entries")
    return arr


def is_symmetric(m: np.ndarray, tol: float = TOL_SYMMETRY) -> bool:
    scale = max(1.0, np.linalg.norm(m))
    return bool(np.linalg.norm(m - m.T) <= tol * scale)


def is_antisymmetric(m: np.ndarray, tol: float = TOL_SYMMETRY) -> bool:
    scale = max(1.0, np.linalg.norm(m))
    return bool(np.linalg.norm(m + m.T) <= tol * scale)


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def frobenius_inner(a: np.ndarray, b: np.ndarray) -> float:
    """<a, b> = tr(a^T b) for real matrices."""
    return float(np.sum(a * b))


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """Frobenius distance of ``a`` from ``b`` relative to ``b`` (absolute when b = 0)."""
    scale = np.linalg.norm(b)
    diff = np.linalg.norm(a - b)
    return float(diff / scale) if scale > 0 else float(diff)


def hamiltonian_defect(x: np.ndarray, theta: np.ndarray) -> float:
    """Frobenius norm of x theta + theta x^T, zero for Hamiltonian matrices."""
    return float(np.linalg.norm(x @ theta + theta @ x.T))


def split_blocks(m: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Split ``m`` after row and column ``n`` into (m11, m12, m21, m22)."""
    return m[:n, :n], m[:n, n:], m[n:, :n], m[n:, n:]


def stability_report(m) -> StabilityReport:
    """
    Report the spectral abscissa of a square matrix.

    ``spectral_radius_exp`` is ln r(e^m), which equals the abscissa.

    Raises:
    -------
    EigenFailure
        If the eigenvalue solver does not converge.
    """
    m = as_matrix(m, "m", square=True)
    if m.size == 0:
        return StabilityReport(-np.inf, -np.inf, True)
    try:
        eigenvalues = np.linalg.eigvals(m)
    except np.linalg.LinAlgError as e:
        raise EigenFailure(f"eigenvalue computation failed: {e}") from e
    abscissa = float(np.max(eigenvalues.real))
    return StabilityReport(
        spectral_abscissa=abscissa,
        spectral_radius_exp=abscissa,
        is_hurwitz=abscissa < 0.0,
    )


def admissible_horizon(m, tol_hurwitz: float = TOL_HURWITZ) -> float:
    """Largest discounting horizon 1/(2 max(0, abscissa)); inf for marginally stable m."""
    abscissa = stability_report(m).spectral_abscissa
    if abscissa <= tol_hurwitz:
        return np.inf
    return 1.0 / (2.0 * abscissa)


def kron_sum(a, b) -> np.ndarray:
    """Kronecker sum a (+) b = a x I + I x b."""
    a = as_matrix(a, "a", square=True)
    b = as_matrix(b, "b", square=True)
    return np.kron(a, np.eye(b.shape[0])) + np.kron(np.eye(a.shape[0]), b)


def vectorize(m) -> np.ndarray:
    """Stack the columns of ``m`` into a vector."""
    m = np.asarray(m)
    if m.ndim != 2:
        raise DimensionMismatch(f"vectorize expects a matrix, got {m.ndim} dimensions")
    return m.reshape(-1, order="F")


def unvectorize(v, rows: int, cols: int) -> np.ndarray:
    """Inverse of ``vectorize``."""
    v = np.asarray(v)
    if v.ndim != 1 or v.size != rows * cols:
        raise DimensionMismatch(f"cannot reshape a vector of size {v.size} into {rows}x{cols}")
    return v.reshape((rows, cols), order="F")


def solve_ale(alpha, beta, tol_hurwitz: float = TOL_HURWITZ, method: str = "kron",
              require_hurwitz: bool = True) -> np.ndarray:
    """
    Solve alpha gamma + gamma alpha^T + beta = 0.

    Parameters:
    -----------
    alpha : array_like
        Square coefficient matrix.
    beta : array_like
        Source term of the same order.
    tol_hurwitz : float, optional
        Required margin of the spectral abscissa below zero.
    method : str, optional
        "kron" solves the vectorized system kron_sum(alpha, alpha) vec(gamma) = -vec(beta);
        "schur" uses the Bartels-Stewart solver of scipy.
    require_hurwitz : bool, optional
        When False the equation is solved for any alpha with no pair of
        eigenvalues summing to zero (e.g. an anti-Hurwitz alpha).

    Returns:
    --------
    numpy.ndarray
        gamma, symmetrized when beta is symmetric.

    Raises:
    -------
    NotHurwitz
        If alpha is not Hurwitz with the required margin, or the operator is singular.
    DimensionMismatch
        If the orders of alpha and beta differ.
    """
    alpha = as_matrix(alpha, "alpha", square=True)
    beta = as_matrix(beta, "beta", square=True)
    if alpha.shape != beta.shape:
        raise DimensionMismatch(f"alpha {alpha.shape} and beta {beta.shape} differ in order")
    if method not in ALE_METHODS:
        raise ValueError(f"method must be one of {ALE_METHODS}, got {method!r}")
    if require_hurwitz:
        report = stability_report(alpha)
        if not report.has_margin(tol_hurwitz):
            raise NotHurwitz(
                f"ALE coefficient has spectral abscissa {report.spectral_abscissa:.3e} "
                f">= -{tol_hurwitz:g}"
            )

    n = alpha.shape[0]
    try:
        if method == "schur":
            gamma = scipy.linalg.solve_continuous_lyapunov(alpha, -beta)
        else:
            gamma = unvectorize(np.linalg.solve(kron_sum(alpha, alpha), -vectorize(beta)), n, n)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as e:
        raise NotHurwitz(f"ALE operator is singular: {e}") from e

    if is_symmetric(beta):
        gamma = symmetrize(gamma)
    return gamma


def quadrature_ale(alpha, beta, cutoff: float = QUAD_CUTOFF) -> np.ndarray:
    """
    Integral of e^{t alpha} beta e^{t alpha^T} over t >= 0 by adaptive Gauss-Kronrod.

    Only one window [0, w] is integrated, w spanning QUAD_WINDOW_CYCLES periods
    of the fastest mode. The tail follows from e^{(t + kw) alpha} = F^k e^{t alpha}
    with F = e^{w alpha}, summed by doubling until a new block falls below
    ``cutoff`` relative to the sum. The cost does not grow with the decay time.
    Used as an independent oracle for ``solve_ale``.

    Raises:
    -------
    NotHurwitz
        If alpha is not Hurwitz.
    QuadratureFailed
        If quad_vec does not converge or the tail does not decay.
    """
    alpha = as_matrix(alpha, "alpha", square=True)
    beta = as_matrix(beta, "beta", square=True)
    if alpha.shape != beta.shape:
        raise DimensionMismatch(f"alpha {alpha.shape} and beta {beta.shape} differ in order")
    report = stability_report(alpha)
    if not report.is_hurwitz:
        raise NotHurwitz(f"quadrature needs a Hurwitz matrix, abscissa {report.spectral_abscissa:.3e}")

    n = alpha.shape[0]
    radius = float(np.max(np.abs(np.linalg.eigvals(alpha))))
    window = QUAD_WINDOW_CYCLES * 2.0 * np.pi / radius

    def integrand(t):
        e = scipy.linalg.expm(t * alpha)
        return (e @ beta @ e.T).ravel()

    value, _, info = quad_vec(
        integrand, 0.0, window,
        epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=QUAD_LIMIT, norm="max", full_output=True,
    )
    if info.status != 0:
        raise QuadratureFailed(f"quad_vec stopped with status {info.status}: {info.message}")

    total = value.reshape(n, n)
    step = scipy.linalg.expm(window * alpha)
    for doubling in range(QUAD_MAX_DOUBLINGS):
        block = step @ total @ step.T
        total = total + block
        if np.linalg.norm(block) <= cutoff * np.linalg.norm(total):
            log.debug(f"quadrature window {window:.3g}, {2 ** (doubling + 1)} windows")
            return total
        step = step @ step
    raise QuadratureFailed(f"tail did not decay after {2 ** QUAD_MAX_DOUBLINGS} windows of length {window:.3g}")


def min_eigenvalue(m: np.ndarray) -> float:
    """Smallest eigenvalue of the symmetric (or Hermitian) part of ``m``."""
    m = np.asarray(m)
    if m.size == 0:
        return np.inf
    return float(np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0])


def is_positive_semidefinite(m: np.ndarray, slack: float = 0.0) -> bool:
    return min_eigenvalue(m) >= -slack


def is_positive_definite(m: np.ndarray, rel_tol: float = 0.0) -> bool:
    scale = max(1.0, np.linalg.norm(m, 2)) if np.size(m) else 1.0
    return min_eigenvalue(m) > rel_tol * scale


def sym_sqrt(m: np.ndarray) -> np.ndarray:
    """Symmetric square root of a positive semidefinite matrix."""
    values, vectors = scipy.linalg.eigh(symmetrize(np.asarray(m, dtype=float)))
    values = np.clip(values, 0.0, None)
    return symmetrize((vectors * np.sqrt(values)) @ vectors.T)


def sym_inv_sqrt(m: np.ndarray) -> np.ndarray:
    """Inverse symmetric square root of a positive definite matrix."""
    values, vectors = scipy.linalg.eigh(symmetrize(np.asarray(m, dtype=float)))
    return symmetrize((vectors / np.sqrt(values)) @ vectors.T)


def spectral_radius(m: np.ndarray) -> float:
    m = np.asarray(m)
    if m.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def relative_spectral_radius(a: np.ndarray, b: np.ndarray) -> float:
    """r(b^{-1} a) for symmetric a and positive definite b (generalized eigenproblem)."""
    values = scipy.linalg.eigh(symmetrize(a), symmetrize(b), eigvals_only=True)
    return float(np.max(np.abs(values)))


def nesting_bound_slack(alpha, beta) -> float:
    """
    Minimum eigenvalue of r(L(alpha, beta) beta^{-1}) L(alpha, beta) - L(alpha, L(alpha, beta)).

    Nonnegative (up to roundoff) for Hurwitz alpha and positive definite beta.
    """
    gamma = solve_ale(alpha, beta)
    nested = solve_ale(alpha, gamma)
    rho = relative_spectral_radius(gamma, beta)
    return min_eigenvalue(rho * gamma - nested)
