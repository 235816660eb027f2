"""
Exception hierarchy for QhoObserver.

Every exception carries the process exit status the command-line front end
reports for it: 1 for configuration problems, 2 for numerical failures and
3 for violated invariants or bounds.
"""

from typing import Optional

from config import EXIT_CONFIG_ERROR, EXIT_NUMERICAL_ERROR, EXIT_VIOLATION


class QhoError(Exception):
    """Base exception for QhoObserver errors."""
    exit_code = EXIT_NUMERICAL_ERROR


class ConfigError(QhoError):
    """Exception raised for unreadable or invalid problem configurations."""
    exit_code = EXIT_CONFIG_ERROR

    def __init__(self, message: str, source: Optional[str] = None,
                 line: Optional[int] = None, key: Optional[str] = None):
        self.source = source
        self.line = line
        self.key = key
        prefix = ""
        if source is not None:
            prefix = f"{source}:{line}: " if line is not None else f"{source}: "
        elif line is not None:
            prefix = f"line {line}: "
        if key:
            prefix += f"{key}: "
        super().__init__(prefix + message)


class InvariantViolation(QhoError):
    """Exception raised when a structural identity or a proven bound fails."""
    exit_code = EXIT_VIOLATION


class NumericalError(QhoError):
    """Base exception for numerical failures and rejected model data."""
    exit_code = EXIT_NUMERICAL_ERROR


# Model data

class DimensionMismatch(NumericalError, ValueError):
    """Matrix shapes are inconsistent."""
    pass


class BadCcr(NumericalError, ValueError):
    """CCR matrix is not antisymmetric or is singular."""
    pass


class BadEnergy(NumericalError, ValueError):
    """Energy matrix is not symmetric."""
    pass


class OddDimension(NumericalError, ValueError):
    """Oscillator dimension is odd."""
    pass


class BadCovariance(NumericalError, ValueError):
    """Initial covariance violates Sigma + i Theta >= 0 or is not symmetric."""
    pass


class BadWeights(NumericalError, ValueError):
    """Cost weights are malformed, e.g. Pi is not positive definite."""
    pass


class BadLemmaParameters(NumericalError, ValueError):
    """Parameters of the matrix deviation bounds are out of range."""
    pass


# Spectral and stability

class EigenFailure(NumericalError):
    """The eigenvalue solver did not converge."""
    pass


class NotHurwitz(NumericalError):
    """A matrix expected to be Hurwitz is not."""
    pass


class NotOscillatory(NumericalError):
    """The dynamics matrix has a spectrum off the imaginary axis."""
    pass


class QuadratureFailed(NumericalError):
    """Adaptive quadrature did not reach its tolerance."""
    pass


class DegenerateEigenbasis(NumericalError):
    """The eigenvector matrix is ill-conditioned or incomplete."""
    pass


class HorizonTooLong(NumericalError):
    """The discounting horizon violates the admissibility bound."""
    pass


class AllFrequenciesZero(NumericalError):
    """No nonzero frequency combination exists."""
    pass


class SearchSpaceTooLarge(NumericalError):
    """Exhaustive integer search would exceed the configured size."""
    pass


class GramianNotPositive(NumericalError):
    """A Gramian expected to be positive semidefinite is not."""
    pass


# Back-action

class UncoupledBlocksNotStable(NumericalError):
    """The discounted plant or observer block is not Hurwitz."""
    pass


class SmallGainViolated(NumericalError):
    """The small-gain quantity eps is not below one."""
    pass


class SingularP1(NumericalError):
    """The uncoupled plant Gramian is singular."""
    pass


class ResolventSingular(NumericalError):
    """The resolvent is evaluated on the spectrum."""
    pass


# Synthesis

class DegenerateP22(NumericalError):
    """The observer block of the controllability Gramian is singular."""
    pass


class DegenerateD12(NumericalError):
    """The (1,2) block of the Lie commutator is singular."""
    pass


class DegenerateP2(NumericalError):
    """The uncoupled observer Gramian is singular."""
    pass


class StructureViolated(NumericalError):
    """The observer is outside the autonomous estimation-error class."""
    pass


class ContinuationStalled(NumericalError):
    """The homotopy corrector failed at the minimal step."""

    def __init__(self, message: str, reached_mu: float = 0.0):
        self.reached_mu = reached_mu
        super().__init__(message)


class AdmissibilityLost(NumericalError):
    """The homotopy path left the admissible region."""

    def __init__(self, message: str, reached_mu: float = 0.0):
        self.reached_mu = reached_mu
        super().__init__(message)
