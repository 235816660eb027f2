"""
Unit tests for the coupling.backaction module.
"""

import unittest

import numpy as np
from numpy.testing import assert_allclose

from qho_observer.coupling import backaction, composite
from qho_observer.errors import BadLemmaParameters
from qho_observer.linalg import matlib
from qho_observer.synthesis import stationarity
from tests.random_instances import random_spd, random_system


class TestZeroCoupling(unittest.TestCase):
    """Without coupling the Gramian stays at diag(P1, P2)."""

    def setUp(self):
        rng = np.random.default_rng(17)
        self.sys = random_system(rng).with_coupling(np.zeros((2, 2)))

    def test_no_deviation(self):
        report = backaction.deviation_bounds(self.sys)
        self.assertEqual(report.eps, 0.0)
        self.assertTrue(report.applicable)
        self.assertLess(report.observed_full_dev, 1e-10)
        self.assertEqual(report.bound_p11, 0.0)
        self.assertEqual(report.kappa, 0.0)
        self.assertEqual((report.gamma1, report.gamma2), (0.0, 0.0))
        self.assertEqual(report.violations(), [])


class TestWeakCoupling(unittest.TestCase):
    """Small-gain and matrix bounds on weakly coupled random systems."""

    def setUp(self):
        rng = np.random.default_rng(23)
        self.systems = [
            random_system(rng, contraction=0.02, tau=0.5),
            random_system(rng, n=2, nu=4, contraction=0.02, tau=0.5),
        ]

    def test_vectorized_equations(self):
        """D1 x + E1 y = -s and D2 y + E2 x = 0 hold for the coupled Gramian."""
        for sys in self.systems:
            gains = backaction.smallgain_data(sys)
            p_gram = composite.controllability_gramian(sys, composite.assemble(sys))
            g11, g12, g21, g22 = matlib.split_blocks(p_gram, sys.n)
            x = np.concatenate([matlib.vectorize(g11), matlib.vectorize(g22)])
            y = np.concatenate([matlib.vectorize(g21), matlib.vectorize(g12)])
            s = np.concatenate([matlib.vectorize(sys.sigma1), matlib.vectorize(sys.sigma2)]) / sys.tau
            scale = 1.0 + np.linalg.norm(s)
            self.assertLess(np.linalg.norm(gains.d1 @ x + gains.e1 @ y + s), 1e-9 * scale)
            self.assertLess(np.linalg.norm(gains.d2 @ y + gains.e2 @ x), 1e-9 * scale)

    def test_bounds_hold(self):
        for sys in self.systems:
            report = backaction.deviation_bounds(sys)
            self.assertTrue(report.applicable)
            self.assertLess(report.eps, 1.0)
            self.assertGreater(report.observed_full_dev, 0.0)
            self.assertLessEqual(report.observed_p11_dev, report.bound_p11 + 1e-8)
            self.assertLessEqual(report.observed_full_dev, report.bound_full + 1e-8)
            self.assertGreaterEqual(report.lemma_lower_slack, -1e-8)
            self.assertGreaterEqual(report.lemma_upper_slack, -1e-8)
            self.assertEqual(report.violations(), [])

    def test_lemma_parameters(self):
        sys = self.systems[0]
        with self.assertRaises(BadLemmaParameters):
            backaction.lmi_deviation_bounds(sys, 0.0, 2.0)
        with self.assertRaises(BadLemmaParameters):
            backaction.lmi_deviation_bounds(sys, 1.0, sys.tau)

    def test_lemma_sandwich_for_any_parameters(self):
        sys = self.systems[0]
        p_gram = composite.controllability_gramian(sys, composite.assemble(sys))
        p1, _ = composite.uncoupled_gramians(sys)
        deviation = p_gram[:sys.n, :sys.n] - p1
        for w, m in ((0.3, 1.0), (2.0, 5.0)):
            lower, upper = backaction.lmi_deviation_bounds(sys, w, m, p_gram=p_gram, p1=p1)
            self.assertGreaterEqual(matlib.min_eigenvalue(deviation - lower), -1e-9)
            self.assertGreaterEqual(matlib.min_eigenvalue(upper - deviation), -1e-9)

    def test_error_lower_bound(self):
        for sys in self.systems:
            bound = backaction.estimation_error_lower_bound(sys)
            self.assertLessEqual(bound, stationarity.cost(sys).error_ms + 1e-8)

    def test_frequency_gains(self):
        """The supremum dominates the gain at omega = 0 and grows with the coupling."""
        sys = self.systems[0]
        gamma1, gamma2 = backaction.frequency_gains(sys)
        shift = 1.0 / (2.0 * sys.tau)
        a = 2.0 * sys.theta1 @ sys.k_energy
        at_zero = np.linalg.norm(np.linalg.solve(shift * np.eye(sys.n) - a, 2.0 * sys.theta1 @ sys.coupling), 2)
        self.assertGreaterEqual(gamma1, at_zero - 1e-12)
        doubled = backaction.frequency_gains(sys.with_coupling(2.0 * sys.coupling))
        assert_allclose(doubled, (2.0 * gamma1, 2.0 * gamma2), rtol=1e-6)

    def test_kappa(self):
        """kappa matches the report and grows linearly for weak coupling."""
        sys = self.systems[0]
        k = backaction.kappa(sys)
        self.assertGreater(k, 0.0)
        self.assertAlmostEqual(k, backaction.deviation_bounds(sys, with_gains=False).kappa, places=12)
        doubled = backaction.kappa(sys.with_coupling(2.0 * sys.coupling))
        self.assertAlmostEqual(doubled / k, 2.0, delta=0.1)

    def test_asymptotic_band(self):
        sys = self.systems[0]
        band = backaction.kappa_asymptotic_band(sys)
        p1, _ = composite.uncoupled_gramians(sys)
        self.assertTrue(matlib.is_symmetric(band))
        self.assertTrue(matlib.is_positive_semidefinite(band))
        ratio = matlib.relative_spectral_radius(p1, sys.sigma1)
        assert_allclose(band, 2.0 * backaction.kappa(sys) * ratio * p1, rtol=1e-10)

    def test_frequency_grid_validation(self):
        with self.assertRaises(ValueError):
            backaction.FrequencyGrid(samples=16)
        with self.assertRaises(ValueError):
            backaction.FrequencyGrid(omega_max=-1.0)


class TestBlockBound(unittest.TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(31)

    def test_psd_matrices_satisfy_both_bounds(self):
        for _ in range(5):
            g = self.rng.standard_normal((4, 4))
            n_mat = g @ g.T
            self.assertGreaterEqual(backaction.block_bound_slack(n_mat), -1e-9)
            self.assertGreaterEqual(backaction.block_bound_slack(n_mat, w=0.7), -1e-9)

    def test_invalid_weight(self):
        with self.assertRaises(BadLemmaParameters):
            backaction.block_bound_slack(random_spd(self.rng, 4), w=0.0)


if __name__ == '__main__':
    unittest.main()
