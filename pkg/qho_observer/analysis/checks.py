"""
Invariant suites for QhoObserver.

This module evaluates the structural identities of oscillators, composite
systems and autonomous observers and tabulates their residuals.
"""

from dataclasses import asdict, dataclass
from typing import Iterable, List, Optional

import numpy as np
import pandas as pd

from config import (
    CHECK_DIRECTIONS, CHECK_FLOW_TIMES, CHECK_SEED, CHECK_TAUS, CHECKS_COLUMNS, TOL_HAMILTONIAN
)
from qho_observer.coupling import backaction, composite
from qho_observer.coupling.composite import PlantObserverSystem
from qho_observer.errors import NumericalError
from qho_observer.linalg import matlib
from qho_observer.logger import get_logger
from qho_observer.oscillator import qho
from qho_observer.synthesis import autonomous, stationarity

log = get_logger("analysis.checks")

STATUS_PASS = "pass"
STATUS_FAIL = "fail"
STATUS_INFO = "info"


@dataclass(frozen=True)
class CheckResult:
    """One evaluated identity; ``tolerance`` is None for informational rows."""
    name: str
    residual: float
    tolerance: Optional[float]
    status: str


def _check(name: str, residual: float, tolerance: Optional[float]) -> CheckResult:
    residual = float(residual)
    if tolerance is None:
        status = STATUS_INFO
    elif np.isfinite(residual) and residual <= tolerance:
        status = STATUS_PASS
    else:
        status = STATUS_FAIL
    if status == STATUS_FAIL:
        log.warning(f"check {name} failed: residual {residual:.3e} > {tolerance:.1e}")
    return CheckResult(name=name, residual=residual, tolerance=tolerance, status=status)


def _failed(name: str, error: Exception) -> CheckResult:
    log.warning(f"check {name} raised {type(error).__name__}: {error}")
    return CheckResult(name=name, residual=float("nan"), tolerance=None, status=STATUS_FAIL)


def run_oscillator_checks(model: qho.QhoModel, init: qho.InitialMoments,
                          taus: Iterable[float] = CHECK_TAUS,
                          flow_times: Iterable[float] = CHECK_FLOW_TIMES) -> List[CheckResult]:
    """CCR preservation, spectral identities and agreement of the moment routes."""
    results = []
    scale = max(1.0, np.linalg.norm(model.dynamics) * np.linalg.norm(model.theta))
    results.append(_check("hamiltonian", matlib.hamiltonian_defect(model.dynamics, model.theta),
                          TOL_HAMILTONIAN * scale))
    for t in flow_times:
        results.append(_check(f"symplectic_flow_t={t:g}", qho.symplectic_defect(model, t),
                              1e-9 * max(1.0, t)))

    try:
        spec = qho.spectral_decompose(model)
    except NumericalError as e:
        results.append(_failed("spectral_decompose", e))
        return results
    results.append(_check("isospectrality", qho.isospectrality_defect(model, spec), 1e-8))
    results.append(_check("projector_resolution", qho.resolution_defect(spec), 1e-8))
    results.append(_check("conjugate_pairing", qho.conjugate_pairing_defect(spec), 1e-8))

    for tau in taus:
        try:
            ale = qho.discounted_moments_ale(model, init, tau)
        except NumericalError as e:
            results.append(_failed(f"moments_ale_tau={tau:g}", e))
            continue
        spectral = qho.discounted_moments_spectral(spec, init, tau)
        results.append(_check(f"moments_routes_tau={tau:g}",
                              matlib.relative_error(spectral.p_real, ale.p_real), 1e-8))
        results.append(_check(f"uncertainty_relation_tau={tau:g}",
                              max(0.0, -matlib.min_eigenvalue(ale.full)), 1e-9))

    limit = qho.infinite_horizon_moments(spec, init)
    results.append(_check("infinite_horizon_trace", float(np.trace(limit.p_real)), None))
    try:
        results.append(_check("convergence_margin", qho.convergence_margin(spec), None))
    except NumericalError as e:
        results.append(_failed("convergence_margin", e))
    return results


def run_composite_checks(sys: PlantObserverSystem, directions: int = CHECK_DIRECTIONS,
                         seed: int = CHECK_SEED, with_gains: bool = False) -> List[CheckResult]:
    """Lie-algebraic identities, cost duality, gradient consistency and the back-action bounds."""
    results = []
    _, contraction = composite.positivity_criterion(sys)
    results.append(_check("energy_contraction_norm", contraction, None))
    dyn = composite.assemble(sys)
    try:
        gramians = composite.gramian_set(sys, dyn)
    except NumericalError as e:
        results.append(_failed("gramians", e))
        return results

    scale = max(1.0, np.linalg.norm(gramians.lie_p) * np.linalg.norm(gramians.lie_q))
    lie = composite.lie_residuals(sys, dyn, gramians)
    results.append(_check("lie_p_equation", lie.p_equation, 1e-8 * max(1.0, np.linalg.norm(gramians.lie_p))))
    results.append(_check("lie_q_equation", lie.q_equation, 1e-8 * max(1.0, np.linalg.norm(gramians.lie_q))))
    results.append(_check("jacobi_identity", lie.jacobi, 1e-8 * scale))
    results.append(_check("jacobi_block", stationarity.jacobi_block_residual(sys, gramians), 1e-8 * scale))

    lie_p, lie_q = composite.resolvent_forms(sys, dyn)
    results.append(_check("resolvent_p", matlib.relative_error(lie_p, gramians.lie_p), 1e-8))
    results.append(_check("resolvent_q", matlib.relative_error(lie_q, gramians.lie_q), 1e-8))

    report = stationarity.cost(sys, gramians)
    results.append(_check("cost_duality", abs(report.total - report.dual_total),
                          1e-9 * max(1.0, abs(report.total))))
    results.append(_check("cost_split", abs(report.total - report.error_ms - report.penalty),
                          1e-9 * max(1.0, abs(report.total))))
    rng = np.random.default_rng(seed)
    results.append(_check("gradient_finite_difference",
                          stationarity.finite_difference_check(sys, directions, rng), 1e-4))
    residual = stationarity.stationarity(sys, gramians)
    results.append(_check("stationarity_l", residual.res_l, None))
    results.append(_check("stationarity_m", residual.res_m, None))

    try:
        bounds = backaction.deviation_bounds(sys, with_gains=with_gains)
    except NumericalError as e:
        results.append(_failed("backaction_bounds", e))
        return results
    results.append(_check("small_gain_eps", bounds.eps, None))
    results.append(_check("backaction_violations", len(bounds.violations()), 0.0))
    return results


def run_autonomous_checks(prob: autonomous.AutonomousObserverProblem) -> List[CheckResult]:
    """Error-dynamics structure and the weak-coupling slope at L = 0."""
    results = []
    zero = np.zeros((prob.n, prob.n))
    dynamics = autonomous.error_dynamics(prob, zero)
    results.append(_check("error_ccr_preservation",
                          matlib.hamiltonian_defect(dynamics.a_hat, dynamics.theta_hat), 1e-10 * max(
                              1.0, np.linalg.norm(dynamics.a_hat) * np.linalg.norm(dynamics.theta_hat))))
    try:
        slope = autonomous.weak_coupling_direction(prob)
        at_origin = autonomous.fixed_point_map(prob, 0.0, zero)
    except NumericalError as e:
        results.append(_failed("weak_coupling_direction", e))
        return results
    results.append(_check("weak_coupling_slope", matlib.relative_error(slope, at_origin), 1e-8))
    results.append(_check("error_ms_at_origin", autonomous.evaluate_point(prob, 0.0, zero).error_ms, None))
    return results


def to_frame(results: Iterable[CheckResult]) -> pd.DataFrame:
    """Tabulate check results in the checks table layout."""
    return pd.DataFrame([asdict(r) for r in results], columns=list(CHECKS_COLUMNS))


def failed_checks(results: Iterable[CheckResult]) -> List[str]:
    """Names of the failed checks, in order."""
    return [r.name for r in results if r.status == STATUS_FAIL]
