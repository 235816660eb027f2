"""
Unit tests for the analysis.checks module.
"""

import unittest

from config import CHECKS_COLUMNS
from qho_observer.analysis import checks
from qho_observer.data_loading import loader


class TestCheckResults(unittest.TestCase):

    def setUp(self):
        self.results = [
            checks.CheckResult("ccr", 1e-14, 1e-10, checks.STATUS_PASS),
            checks.CheckResult("gramian_psd", 0.3, 1e-9, checks.STATUS_FAIL),
            checks.CheckResult("margin", 0.76, None, checks.STATUS_INFO),
            checks.CheckResult("jacobi", float("nan"), None, checks.STATUS_FAIL),
        ]

    def test_failed_checks(self):
        self.assertEqual(checks.failed_checks(self.results), ["gramian_psd", "jacobi"])
        self.assertEqual(checks.failed_checks(self.results[:1]), [])

    def test_frame_layout(self):
        frame = checks.to_frame(self.results)
        self.assertEqual(list(frame.columns), list(CHECKS_COLUMNS))
        self.assertEqual(len(frame), 4)


class TestOscillatorSuite(unittest.TestCase):

    def test_fixture_passes(self):
        problem = loader.load_problem("EX1")
        results = checks.run_oscillator_checks(problem.model, problem.init)
        self.assertGreater(len(results), 0)
        self.assertEqual(checks.failed_checks(results), [])


if __name__ == '__main__':
    unittest.main()
