"""
Unit tests for the synthesis.stationarity module.
"""

import unittest

import numpy as np
from numpy.testing import assert_allclose

from qho_observer.errors import DegenerateD12, DimensionMismatch
from qho_observer.synthesis import stationarity
from tests.random_instances import random_system


class TestCost(unittest.TestCase):
    """Cost split and its dual form."""

    def setUp(self):
        rng = np.random.default_rng(41)
        self.systems = [random_system(rng), random_system(rng, n=4, nu=2, p=3, lam=0.5, tau=2.0)]

    def test_duality_and_split(self):
        for sys in self.systems:
            report = stationarity.cost(sys)
            self.assertAlmostEqual(report.total, report.dual_total, delta=1e-9 * abs(report.total))
            self.assertAlmostEqual(report.total, report.error_ms + report.penalty,
                                   delta=1e-10 * abs(report.total))
            self.assertGreater(report.penalty, 0.0)

    def test_penalty_scales_with_lambda(self):
        sys = self.systems[0]
        base = stationarity.cost(sys)
        tripled = stationarity.cost(sys.with_lambda(3.0 * sys.lam))
        self.assertAlmostEqual(tripled.penalty, 3.0 * base.penalty, delta=1e-10 * base.penalty)
        self.assertAlmostEqual(tripled.error_ms, base.error_ms, delta=1e-10 * base.error_ms)


class TestGradients(unittest.TestCase):

    def setUp(self):
        rng = np.random.default_rng(43)
        self.systems = [
            random_system(rng),
            random_system(rng, n=2, nu=4, p=1, tau=0.7),
            random_system(rng, n=4, nu=4, lam=2.0),
        ]

    def test_finite_differences(self):
        for sys in self.systems:
            error = stationarity.finite_difference_check(sys, directions=10, rng=np.random.default_rng(0))
            self.assertLess(error, 1e-4)

    def test_energy_gradient_is_symmetric(self):
        for sys in self.systems:
            grad = stationarity.gradients(sys)
            assert_allclose(grad.grad_m, grad.grad_m.T)
            self.assertEqual(grad.grad_l.shape, (sys.n, sys.nu))

    def test_residuals_match_covariance_relation(self):
        """The observer rows reproduce the M-condition and the plant rows the L-condition."""
        for sys in self.systems:
            _, gramians = stationarity.evaluate(sys)
            residual = stationarity.stationarity(sys, gramians)
            relation = stationarity.covariance_relation_check(sys, gramians)
            self.assertAlmostEqual(relation.lower, residual.res_m, delta=1e-10 * (1.0 + residual.res_m))
            self.assertAlmostEqual(relation.upper, residual.res_l, delta=1e-10 * (1.0 + residual.res_l))

    def test_lie_residuals_track_standard_ones(self):
        """D22 = (Theta2 E22 - E22^T Theta2) Theta2^{-1}."""
        for sys in self.systems:
            residual = stationarity.stationarity(sys)
            theta_inv_norm = np.linalg.norm(np.linalg.inv(sys.theta2), 2)
            self.assertLessEqual(residual.res_lie_m, residual.res_m * theta_inv_norm * (1.0 + 1e-9) + 1e-12)
            self.assertLessEqual(residual.res_lie_l, residual.res_l * theta_inv_norm * (1.0 + 1e-9) + 1e-12)

    def test_gradient_descent_decreases_cost(self):
        sys = self.systems[0]
        final, history = stationarity.gradient_descent(sys, max_iter=15)
        self.assertGreater(len(history), 1)
        self.assertTrue(all(b < a for a, b in zip(history, history[1:])))
        self.assertAlmostEqual(stationarity.cost(final).total, history[-1], delta=1e-10 * abs(history[-1]))

    def test_gradient_descent_with_fixed_energy(self):
        sys = self.systems[0]
        final, _ = stationarity.gradient_descent(sys, max_iter=5, optimize_m=False)
        assert_allclose(final.m_energy, sys.m_energy)


class TestRecovery(unittest.TestCase):
    """Recovery of the coupling and of the observer energy from the Gramians."""

    def setUp(self):
        rng = np.random.default_rng(47)
        self.sys = random_system(rng, n=2, nu=2)
        self.wide = random_system(rng, n=2, nu=4)
        _, self.gramians = stationarity.evaluate(self.sys)

    def test_coupling_forms_agree(self):
        standard = stationarity.recover_coupling(self.gramians, self.sys, form="standard")
        lie = stationarity.recover_coupling(self.gramians, self.sys, form="lie")
        assert_allclose(lie, standard, rtol=1e-8, atol=1e-10 * np.linalg.norm(standard))

    def test_unknown_form(self):
        with self.assertRaises(ValueError):
            stationarity.recover_coupling(self.gramians, self.sys, form="other")

    def test_jacobi_block_vanishes(self):
        scale = (1.0 + np.linalg.norm(self.gramians.lie_d)) * (
            1.0 + np.linalg.norm(self.sys.k_energy) + np.linalg.norm(self.sys.m_energy)
            + np.linalg.norm(self.sys.coupling)
        )
        self.assertLess(stationarity.jacobi_block_residual(self.sys, self.gramians), 1e-8 * scale)

    def test_energy_recovery_with_d22(self):
        """Keeping the D22 term recovers M at any nondegenerate observer."""
        recovery = stationarity.recover_observer_energy(self.gramians, self.sys, include_d22=True)
        assert_allclose(recovery.m_energy, self.sys.m_energy, rtol=1e-6, atol=1e-6)
        self.assertLess(recovery.symmetry_defect, 1e-6)

    def test_degenerate_d12(self):
        """With S2 = 0 and L = 0 the blocks decouple and D12 vanishes."""
        sys = self.sys.with_coupling(np.zeros((2, 2)))
        sys = type(sys)(
            theta1=sys.theta1, theta2=sys.theta2, k_energy=sys.k_energy, m_energy=sys.m_energy,
            coupling=sys.coupling, sigma1=sys.sigma1, sigma2=sys.sigma2, s1=sys.s1,
            s2=np.zeros_like(sys.s2), pi_weight=sys.pi_weight, lam=sys.lam, tau=sys.tau,
        )
        _, gramians = stationarity.evaluate(sys)
        with self.assertRaises(DegenerateD12):
            stationarity.recover_observer_energy(gramians, sys)

    def test_unequal_orders(self):
        _, gramians = stationarity.evaluate(self.wide)
        with self.assertRaises(DimensionMismatch):
            stationarity.recover_observer_energy(gramians, self.wide)


if __name__ == '__main__':
    unittest.main()
