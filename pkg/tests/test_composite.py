"""
Unit tests for the coupling.composite module.
"""

import unittest

import numpy as np
from numpy.testing import assert_allclose

from qho_observer.coupling import composite
from qho_observer.data_loading import loader
from qho_observer.errors import BadWeights, DimensionMismatch, HorizonTooLong
from qho_observer.linalg import matlib
from qho_observer.synthesis import stationarity
from tests.random_instances import random_system

EX2_P1 = np.array([[9.7049, 7.0975], [7.0975, 11.6664]])
EX2_P2 = np.array([[2.4681, 1.7476], [1.7476, 2.7674]])
EX2_ERROR_AT_ZERO = 46.8634


class TestExampleComposite(unittest.TestCase):
    """The mirrored observer of fixture EX2 at zero coupling."""

    def setUp(self):
        self.sys = loader.load_problem("EX2").system

    def test_uncoupled_gramians(self):
        p1, p2 = composite.uncoupled_gramians(self.sys)
        assert_allclose(p1, EX2_P1, rtol=1e-3, atol=2e-3)
        assert_allclose(p2, EX2_P2, rtol=1e-3, atol=2e-3)

    def test_zero_coupling_gramian_is_block_diagonal(self):
        dyn = composite.assemble(self.sys)
        p_gram = composite.controllability_gramian(self.sys, dyn)
        assert_allclose(p_gram, composite.uncoupled_gramian(self.sys), atol=1e-10)

    def test_error_at_zero_coupling(self):
        report = stationarity.cost(self.sys)
        self.assertAlmostEqual(report.error_ms, EX2_ERROR_AT_ZERO, delta=5e-3)
        self.assertEqual(report.penalty, 0.0)


class TestRandomComposite(unittest.TestCase):
    """Identities of the Gramians on random plant-observer systems."""

    def setUp(self):
        self.rng = np.random.default_rng(7)
        self.systems = [
            random_system(self.rng, n=2, nu=2),
            random_system(self.rng, n=2, nu=4, p=3),
            random_system(self.rng, n=4, nu=2, tau=0.4, lam=2.5),
        ]

    def test_positivity(self):
        for sys in self.systems:
            positive, contraction = composite.positivity_criterion(sys)
            self.assertTrue(positive)
            self.assertAlmostEqual(contraction, 0.3, places=10)
            self.assertGreater(matlib.min_eigenvalue(sys.energy), 0.0)

    def test_marginally_stable_and_admissible(self):
        for sys in self.systems:
            dyn = composite.assemble(sys)
            admissible, margin = composite.admissibility(sys, dyn)
            self.assertTrue(admissible)
            self.assertEqual(margin, np.inf)

    def test_lie_residuals(self):
        for sys in self.systems:
            dyn = composite.assemble(sys)
            gramians = composite.gramian_set(sys, dyn)
            residuals = composite.lie_residuals(sys, dyn, gramians)
            scale = 1.0 + np.linalg.norm(gramians.lie_p) + np.linalg.norm(gramians.lie_q)
            self.assertLess(residuals.p_equation, 1e-9 * scale)
            self.assertLess(residuals.q_equation, 1e-9 * scale)
            self.assertLess(residuals.jacobi, 1e-8 * scale ** 2)

    def test_resolvent_forms(self):
        for sys in self.systems:
            dyn = composite.assemble(sys)
            gramians = composite.gramian_set(sys, dyn)
            lie_p, lie_q = composite.resolvent_forms(sys, dyn)
            self.assertLess(matlib.relative_error(lie_p, gramians.lie_p), 1e-8)
            self.assertLess(matlib.relative_error(lie_q, gramians.lie_q), 1e-8)

    def test_gramians_are_semidefinite(self):
        for sys in self.systems:
            dyn = composite.assemble(sys)
            gramians = composite.gramian_set(sys, dyn)
            self.assertTrue(matlib.is_positive_semidefinite(gramians.p_gram, slack=1e-9))
            self.assertTrue(matlib.is_positive_semidefinite(gramians.q_gram, slack=1e-9))
            self.assertTrue(matlib.is_positive_semidefinite(
                gramians.p_gram + 1j * sys.theta / 1.0, slack=1e-9
            ))

    def test_observability_gramian(self):
        for sys in self.systems:
            dyn = composite.assemble(sys)
            q_gram = composite.observability_gramian(sys, dyn)
            residual = dyn.a_tau.T @ q_gram + q_gram @ dyn.a_tau + dyn.c_full.T @ dyn.c_full
            self.assertLess(np.linalg.norm(residual), 1e-9 * (1.0 + np.linalg.norm(q_gram)))
            assert_allclose(q_gram, composite.gramian_set(sys, dyn).q_gram)

    def test_output_matrix(self):
        sys = self.systems[0]
        dyn = composite.assemble(sys)
        assert_allclose(dyn.c_full[: sys.p], sys.s)
        penalty = dyn.c_full[sys.p:, sys.n:]
        assert_allclose(penalty.T @ penalty, sys.lam * sys.coupling.T @ sys.pi_weight @ sys.coupling,
                        atol=1e-12)


class TestValidation(unittest.TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(1)
        self.sys = random_system(self.rng)

    def test_horizon_too_long(self):
        """K = diag(1, -1) gives a hyperbolic plant with horizon 1/2."""
        sys = self.sys.with_coupling(np.zeros((2, 2)))
        sys = composite.PlantObserverSystem(
            theta1=sys.theta1, theta2=sys.theta2, k_energy=np.diag([1.0, -1.0]),
            m_energy=sys.m_energy, coupling=sys.coupling, sigma1=sys.sigma1, sigma2=sys.sigma2,
            s1=sys.s1, s2=sys.s2, pi_weight=sys.pi_weight, lam=1.0, tau=1.0,
        )
        dyn = composite.assemble(sys)
        self.assertFalse(composite.admissibility(sys, dyn)[0])
        with self.assertRaises(HorizonTooLong):
            composite.gramian_set(sys, dyn)

    def test_coupling_shape(self):
        with self.assertRaises(DimensionMismatch):
            self.sys.with_coupling(np.zeros((2, 3)))

    def test_bad_weights(self):
        with self.assertRaises(BadWeights):
            self.sys.with_lambda(0.0)
        with self.assertRaises(BadWeights):
            composite.PlantObserverSystem(
                theta1=self.sys.theta1, theta2=self.sys.theta2, k_energy=self.sys.k_energy,
                m_energy=self.sys.m_energy, coupling=self.sys.coupling, sigma1=self.sys.sigma1,
                sigma2=self.sys.sigma2, s1=self.sys.s1, s2=self.sys.s2,
                pi_weight=-np.eye(2), lam=1.0, tau=1.0,
            )


if __name__ == '__main__':
    unittest.main()
