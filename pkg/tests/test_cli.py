"""
Tests for the qho command-line interface.
"""

import os
import tempfile
import unittest

import numpy as np
import pandas as pd
import yaml

from config import (
    BACKACTION_TABLE, CHECKS_COLUMNS, CHECKS_TABLE, EXIT_CONFIG_ERROR, EXIT_OK, MANIFEST_FILE,
    MOMENTS_TABLE, SUMMARY_FILE, SYNTHESIS_TABLE
)
from qho_observer import cli
from qho_observer.errors import ConfigError

QUIET = ["--log-level", "ERROR", "--no-progress"]


def read_summary(out_dir: str) -> dict:
    with open(os.path.join(out_dir, SUMMARY_FILE), encoding="utf-8") as f:
        return dict(line.rstrip("\n").split(" = ", 1) for line in f if line.strip())


class TestParseGrid(unittest.TestCase):

    def test_valid_grid(self):
        np.testing.assert_allclose(cli.parse_grid("0.5:2:4"), [0.5, 1.0, 1.5, 2.0])
        self.assertEqual(len(cli.parse_grid("0:1:11", allow_zero=True)), 11)

    def test_invalid_grids(self):
        for text in ("1:2", "a:b:c", "2:1:3", "0:1:5", "1:2:0", "-1:1:3"):
            with self.assertRaises(ConfigError, msg=text):
                cli.parse_grid(text)

    def test_parse_args_rejects_non_strings(self):
        with self.assertRaises(TypeError):
            cli.parse_args(["moments", 1])


class TestCommands(unittest.TestCase):
    """End-to-end runs of every subcommand on the bundled fixtures."""

    def setUp(self):
        self.temp_dir = tempfile.TemporaryDirectory()
        self.out = self.temp_dir.name

    def tearDown(self):
        self.temp_dir.cleanup()

    def run_cli(self, *args) -> int:
        return cli.main(QUIET + list(args))

    def test_moments_default_grid(self):
        """Rows: Sigma at tau = 0, one hundred discounted rows, the time average."""
        self.assertEqual(self.run_cli("moments", "--config", "EX1", "--out", self.out), EXIT_OK)
        frame = pd.read_csv(os.path.join(self.out, MOMENTS_TABLE))
        self.assertEqual(len(frame), 102)
        self.assertEqual(frame["tag"].iloc[0], "tau=0")
        self.assertEqual(frame["tag"].iloc[-1], "tau=inf")
        self.assertIn("P_1_4", frame.columns)
        self.assertNotIn("P_4_1", frame.columns)
        self.assertAlmostEqual(frame["P_1_1"].iloc[-1], 8.3140, delta=2e-3)
        summary = read_summary(self.out)
        self.assertAlmostEqual(float(summary["tau_star"]), 0.7645, delta=1e-3)
        self.assertAlmostEqual(float(summary["trace_inf"]), 26.3369, delta=5e-3)

    def test_moments_custom_grid(self):
        code = self.run_cli("moments", "--config", "EX1", "--out", self.out, "--tau-grid", "0.5:2:4")
        self.assertEqual(code, EXIT_OK)
        frame = pd.read_csv(os.path.join(self.out, MOMENTS_TABLE))
        self.assertEqual(list(frame["tag"]), ["tau=0"] + ["discounted"] * 4 + ["tau=inf"])

    def test_synthesize(self):
        code = self.run_cli("synthesize", "--config", "EX2", "--out", self.out,
                            "--mu-max", "0.5", "--steps", "8")
        self.assertEqual(code, EXIT_OK)
        frame = pd.read_csv(os.path.join(self.out, SYNTHESIS_TABLE))
        self.assertEqual(len(frame), 9)
        self.assertAlmostEqual(frame["error_ms"].iloc[0], 46.8634, delta=5e-3)
        summary = read_summary(self.out)
        self.assertEqual(summary["completed"], "true")
        self.assertAlmostEqual(float(summary["reached_mu"]), 0.5)

    def test_synthesize_needs_autonomous_config(self):
        code = self.run_cli("synthesize", "--config", "EX1", "--out", self.out)
        self.assertEqual(code, EXIT_CONFIG_ERROR)

    def test_backaction_along_path(self):
        code = self.run_cli("backaction", "--config", "EX2", "--out", self.out,
                            "--mu-max", "0.2", "--steps", "8", "--skip-gains")
        self.assertEqual(code, EXIT_OK)
        frame = pd.read_csv(os.path.join(self.out, BACKACTION_TABLE))
        self.assertEqual(len(frame), 9)
        self.assertEqual(frame["status"].iloc[0], "ok")
        self.assertLess(frame["observed_full_dev"].iloc[0], 1e-9)
        self.assertTrue(frame["gamma1"].isna().all())

    def test_check_suites(self):
        self.assertEqual(self.run_cli("check", "--config", "EX1", "--out", self.out), EXIT_OK)
        frame = pd.read_csv(os.path.join(self.out, CHECKS_TABLE))
        self.assertEqual(list(frame.columns), list(CHECKS_COLUMNS))
        self.assertFalse((frame["status"] == "fail").any())
        with open(os.path.join(self.out, MANIFEST_FILE), encoding="utf-8") as f:
            manifest = yaml.safe_load(f)
        self.assertEqual(manifest["command"], "check")
        self.assertEqual(manifest["seed"], 0)
        self.assertIn("plant", manifest["inputs"])

    def test_check_observer_fixture(self):
        self.assertEqual(self.run_cli("check", "--config", "EX2", "--out", self.out), EXIT_OK)
        frame = pd.read_csv(os.path.join(self.out, CHECKS_TABLE))
        self.assertIn("weak_coupling_slope", set(frame["name"]))
        self.assertIn("gradient_finite_difference", set(frame["name"]))

    def test_runs_are_deterministic(self):
        """Tables and summaries of two identical runs are byte-identical."""
        second = os.path.join(self.out, "second")
        first = os.path.join(self.out, "first")
        for target in (first, second):
            self.run_cli("moments", "--config", "EX1", "--out", target, "--tau-grid", "0.1:1:5")
        for name in (MOMENTS_TABLE, SUMMARY_FILE):
            with open(os.path.join(first, name), "rb") as a, open(os.path.join(second, name), "rb") as b:
                self.assertEqual(a.read(), b.read(), name)

    def test_bad_config(self):
        path = os.path.join(self.out, "bad.yaml")
        with open(path, "w", encoding="utf-8") as f:
            f.write("plant:\n  theta: canonical\n  K: [[1.0, 2.0], [0.0, 1.0]]\n  sigma1: [[1.0, 0.0], [0.0, 1.0]]\n")
        self.assertEqual(self.run_cli("moments", "--config", path, "--out", self.out), EXIT_CONFIG_ERROR)
        self.assertEqual(self.run_cli("moments", "--config", os.path.join(self.out, "none.yaml"),
                                      "--out", self.out), EXIT_CONFIG_ERROR)

    def test_missing_command_and_bad_grid(self):
        self.assertEqual(cli.main(QUIET), EXIT_CONFIG_ERROR)
        code = self.run_cli("moments", "--config", "EX1", "--out", self.out, "--tau-grid", "1:0:3")
        self.assertEqual(code, EXIT_CONFIG_ERROR)


if __name__ == '__main__':
    unittest.main()
