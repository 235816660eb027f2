"""
Unit tests for the oscillator.qho module.
"""

import unittest

import numpy as np
from numpy.testing import assert_allclose

from qho_observer.data_loading import loader
from qho_observer.errors import (
    AllFrequenciesZero, BadCcr, BadCovariance, BadEnergy, DimensionMismatch,
    HorizonTooLong, OddDimension, SearchSpaceTooLarge
)
from qho_observer.linalg import matlib
from qho_observer.oscillator import qho
from tests.random_instances import random_oscillator

EX1_FREQUENCIES = np.array([4.3074, 0.6540, -4.3074, -0.6540])
EX1_TAU_STAR = 0.7645
EX1_MOMENTS_INF = np.array([
    [8.3140, -4.8573, 0.3322, 1.8803],
    [-4.8573, 5.7935, 1.5480, -1.6743],
    [0.3322, 1.5480, 9.3853, -0.7758],
    [1.8803, -1.6743, -0.7758, 2.8441],
])
EX1_TRACE_INF = 26.3369
EX2_PLANT_FREQUENCY = 1.9522
EX2_PLANT_TAU_STAR = 0.2561


class TestExampleOscillator(unittest.TestCase):
    """The two-mode oscillator shipped as fixture EX1."""

    def setUp(self):
        problem = loader.load_problem("EX1")
        self.model = problem.model
        self.init = problem.init
        self.spec = qho.spectral_decompose(self.model)

    def test_frequencies(self):
        """Frequencies are listed positive-descending, then negated."""
        assert_allclose(self.spec.omega, EX1_FREQUENCIES, atol=1e-3)

    def test_convergence_margin(self):
        self.assertAlmostEqual(qho.convergence_margin(self.spec), EX1_TAU_STAR, delta=1e-3)

    def test_single_mode_margin(self):
        """The EX2 plant has one frequency, so tau_* = 1/(2 omega)."""
        plant = loader.load_problem("EX2").model
        spec = qho.spectral_decompose(plant)
        self.assertAlmostEqual(spec.positive_frequencies[0], EX2_PLANT_FREQUENCY, delta=1e-3)
        self.assertAlmostEqual(qho.convergence_margin(spec), EX2_PLANT_TAU_STAR, delta=1e-3)

    def test_infinite_horizon_moments(self):
        moments = qho.infinite_horizon_moments(self.spec, self.init)
        assert_allclose(moments.p_real, EX1_MOMENTS_INF, rtol=1e-3, atol=2e-3)
        self.assertAlmostEqual(float(np.trace(moments.p_real)), EX1_TRACE_INF, delta=5e-3)
        assert_allclose(moments.full.imag, self.model.theta, atol=1e-9)

    def test_long_horizon_approaches_time_average(self):
        """The discounted moments at tau = 1e4 sit within 1e-2 of the time average."""
        long_run = qho.discounted_moments_ale(self.model, self.init, 1e4)
        average = qho.infinite_horizon_moments(self.spec, self.init)
        self.assertLess(np.max(np.abs(long_run.p_real - average.p_real)), 1e-2)

    def test_routes_agree(self):
        """Lyapunov, spectral and quadrature routes give the same moments."""
        for tau in (0.1, 1.0, 3.8225, 10.0):
            ale = qho.discounted_moments_ale(self.model, self.init, tau)
            spectral = qho.discounted_moments_spectral(self.spec, self.init, tau)
            self.assertLess(matlib.relative_error(spectral.p_real, ale.p_real), 1e-8)
            quadrature = qho.discounted_moments_quadrature(self.model, self.init, tau)
            self.assertLess(matlib.relative_error(quadrature.p_real, ale.p_real), 1e-7)

    def test_routes_agree_at_range_ends(self):
        """Short and very long horizons, where the integrand decays fast or oscillates for long."""
        for tau in (1e-3, 1e3, 1e4):
            ale = qho.discounted_moments_ale(self.model, self.init, tau)
            spectral = qho.discounted_moments_spectral(self.spec, self.init, tau)
            quadrature = qho.discounted_moments_quadrature(self.model, self.init, tau)
            self.assertLess(matlib.relative_error(spectral.p_real, ale.p_real), 1e-7, msg=f"tau = {tau:g}")
            self.assertLess(matlib.relative_error(quadrature.p_real, ale.p_real), 1e-7, msg=f"tau = {tau:g}")

    def test_frequency_route(self):
        ale = qho.discounted_moments_ale(self.model, self.init, 1.0)
        frequency = qho.discounted_moments_frequency(self.model, self.init, 1.0)
        self.assertLess(matlib.relative_error(frequency.p_real, ale.p_real), 1e-4)

    def test_moments_start_at_sigma(self):
        """As tau -> 0 the discounted moments return to the initial covariance."""
        moments = qho.discounted_moments_ale(self.model, self.init, 1e-6)
        self.assertLess(matlib.relative_error(moments.p_real, self.init.sigma), 1e-4)

    def test_single_mode_time_average(self):
        """One mode: E_inf = C1 Gamma C1^* + conj(C1) Gamma C1^T."""
        plant = loader.load_problem("EX2")
        spec = qho.spectral_decompose(plant.model)
        c1 = spec.c[0]
        expected = c1 @ plant.init.gamma @ c1.conj().T + c1.conj() @ plant.init.gamma @ c1.T
        moments = qho.infinite_horizon_moments(spec, plant.init)
        assert_allclose(moments.full, expected, atol=1e-10)

    def test_torus_average_matches_time_average(self):
        """Distinct frequencies: independent phases average like the time average."""
        pi_weight = np.eye(4)
        torus = qho.torus_quadratic_average(self.spec, self.init, pi_weight)
        modal = qho.quadratic_form_average(self.spec, self.init, pi_weight)
        self.assertAlmostEqual(torus, modal, delta=1e-8 * abs(modal))
        self.assertAlmostEqual(modal, EX1_TRACE_INF, delta=5e-3)

    def test_spectral_invariants(self):
        self.assertLess(qho.resolution_defect(self.spec), 1e-9)
        self.assertLess(qho.conjugate_pairing_defect(self.spec), 1e-9)
        self.assertLess(qho.isospectrality_defect(self.model, self.spec), 1e-9)

    def test_flow_is_symplectic(self):
        for t in (0.1, 1.0, 10.0):
            self.assertLess(qho.symplectic_defect(self.model, t), 1e-8)

    def test_nonpositive_tau_rejected(self):
        with self.assertRaises(ValueError):
            qho.discounted_moments_ale(self.model, self.init, 0.0)


class TestRandomOscillators(unittest.TestCase):
    """Route agreement on random instances of several sizes."""

    def setUp(self):
        self.rng = np.random.default_rng(2024)

    def test_ale_and_spectral_routes(self):
        for n in (2, 4, 6):
            theta, energy, sigma = random_oscillator(self.rng, n)
            model = qho.build_model(theta, energy)
            init = qho.InitialMoments.from_sigma(sigma, theta)
            spec = qho.spectral_decompose(model)
            for tau in (0.3, 3.0):
                ale = qho.discounted_moments_ale(model, init, tau)
                spectral = qho.discounted_moments_spectral(spec, init, tau)
                self.assertLess(matlib.relative_error(spectral.p_real, ale.p_real), 1e-8)
                self.assertTrue(matlib.is_positive_semidefinite(ale.full, slack=1e-9))

    def test_routes_match_quadrature_oracle(self):
        """Fifty random R > 0 instances, n in (2, 4, 6), all checked against quadrature."""
        for index in range(50):
            n = (2, 4, 6)[index % 3]
            theta, energy, sigma = random_oscillator(self.rng, n)
            model = qho.build_model(theta, energy)
            init = qho.InitialMoments.from_sigma(sigma, theta)
            spec = qho.spectral_decompose(model)
            for tau in (0.1, 1.0, 10.0):
                oracle = qho.discounted_moments_quadrature(model, init, tau).p_real
                ale = qho.discounted_moments_ale(model, init, tau).p_real
                spectral = qho.discounted_moments_spectral(spec, init, tau).p_real
                label = f"instance {index}, n = {n}, tau = {tau:g}"
                self.assertLess(matlib.relative_error(ale, oracle), 1e-7, msg=label)
                self.assertLess(matlib.relative_error(spectral, oracle), 1e-7, msg=label)

    def test_single_frequency_closed_form(self):
        """n = 2: Phi_tau = [[1, chi(2 omega)], [chi(-2 omega), 1]] with chi(u) = 1/(1 - i u tau)."""
        theta, energy, sigma = random_oscillator(self.rng, 2)
        model = qho.build_model(theta, energy)
        init = qho.InitialMoments.from_sigma(sigma, theta)
        spec = qho.spectral_decompose(model)
        omega = spec.positive_frequencies[0]
        self.assertAlmostEqual(omega, np.sqrt(np.linalg.det(energy)), delta=1e-10)
        for tau in (0.2, 2.0, 20.0):
            up, down = 1.0 / (1.0 - 2j * omega * tau), 1.0 / (1.0 + 2j * omega * tau)
            phi = np.array([[1.0, up], [down, 1.0]])
            expected = spec.v @ (phi * (spec.w @ init.gamma @ spec.w.conj().T)) @ spec.v.conj().T
            ale = qho.discounted_moments_ale(model, init, tau)
            assert_allclose(ale.p_real, expected.real, rtol=1e-9, atol=1e-10)

    def test_zero_energy_keeps_sigma(self):
        """With R = 0 nothing moves, so every horizon returns Sigma."""
        theta, _, sigma = random_oscillator(self.rng, 4)
        model = qho.build_model(theta, np.zeros((4, 4)))
        init = qho.InitialMoments.from_sigma(sigma, theta)
        spec = qho.spectral_decompose(model)
        assert_allclose(qho.discounted_moments_ale(model, init, 2.0).p_real, sigma, atol=1e-10)
        assert_allclose(qho.infinite_horizon_moments(spec, init).p_real, sigma, atol=1e-9)
        with self.assertRaises(AllFrequenciesZero):
            qho.convergence_margin(spec)

    def test_indefinite_energy_limits_horizon(self):
        theta = loader.canonical_ccr(2)
        model = qho.build_model(theta, np.diag([1.0, -1.0]))
        init = qho.InitialMoments.from_sigma(np.eye(2), theta)
        limit = matlib.admissible_horizon(model.dynamics)
        self.assertTrue(np.isfinite(limit))
        qho.discounted_moments_ale(model, init, 0.5 * limit)
        with self.assertRaises(HorizonTooLong):
            qho.discounted_moments_ale(model, init, 2.0 * limit)


class TestValidation(unittest.TestCase):

    def setUp(self):
        self.theta = loader.canonical_ccr(2)

    def test_odd_dimension(self):
        with self.assertRaises(OddDimension):
            qho.build_model(np.zeros((3, 3)), np.eye(3))

    def test_bad_ccr(self):
        with self.assertRaises(BadCcr):
            qho.build_model(np.eye(2), np.eye(2))
        with self.assertRaises(BadCcr):
            qho.validate_ccr(np.zeros((2, 2)))

    def test_bad_energy(self):
        with self.assertRaises(BadEnergy):
            qho.build_model(self.theta, np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_dimension_mismatch(self):
        with self.assertRaises(DimensionMismatch):
            qho.build_model(self.theta, np.eye(4))

    def test_uncertainty_relation(self):
        """Sigma = 0 violates Sigma + i Theta >= 0."""
        with self.assertRaises(BadCovariance):
            qho.InitialMoments.from_sigma(np.zeros((2, 2)), self.theta)
        qho.InitialMoments.from_sigma(0.5 * np.eye(2), self.theta)


class TestIncommensurability(unittest.TestCase):

    def test_resonant_frequencies(self):
        independent, witness = qho.incommensurability_diagnostic([1.0, 2.0], 3)
        self.assertFalse(independent)
        self.assertEqual(witness, (2, -1))

    def test_irrational_ratio(self):
        independent, witness = qho.incommensurability_diagnostic([1.0, np.sqrt(2.0)], 5)
        self.assertTrue(independent)
        self.assertIsNone(witness)

    def test_search_space_limit(self):
        with self.assertRaises(SearchSpaceTooLarge):
            qho.incommensurability_diagnostic(np.arange(1.0, 9.0), 50)

    def test_margin(self):
        self.assertAlmostEqual(qho.frequency_margin([3.0, 1.0, -3.0, -1.0]), 0.5)


if __name__ == '__main__':
    unittest.main()
