"""
End-to-end tests of the plate command-line application.

This script runs the commands through typer's test runner and checks:
- Output files of solve, study, adapt and cr
- Exit codes for configuration, numerical and verification errors
- The thread limit taken from the environment
"""

import os
import tempfile
import unittest
from unittest.mock import patch

from numpy.linalg import LinAlgError
from typer.testing import CliRunner

from src.commands.run_commands import run_study
from src.config import parse_config
from src.main import create_app
from src.models import verification
from src.models.adapt import STUDY_COLUMNS
from src.models.reporting import ESTIMATOR_COLUMNS, read_study_csv
from src.models.verification import CheckResult

UNIFORM = """\
[mesh]
domain = square
initial = 4

[scheme]
name = morley

[study]
kind = uniform
levels = 2
"""


class TestPlateApplication(unittest.TestCase):
    """Test case for the plate application."""

    def setUp(self):
        """Set up test environment."""
        self.app = create_app()
        self.runner = CliRunner()
        self.tmp = tempfile.TemporaryDirectory()
        self.directory = self.tmp.name

    def tearDown(self):
        """Clean up after tests."""
        self.tmp.cleanup()

    def write_config(self, text, name="run.ini"):
        path = os.path.join(self.directory, name)
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(text)
        return path

    def invoke(self, *args, env=None):
        return self.runner.invoke(self.app, list(args), env=env)

    def test_study_writes_csv(self):
        """Test a uniform study and the CSV it writes."""
        out = os.path.join(self.directory, "out")
        result = self.invoke("study", "--config", self.write_config(UNIFORM), "--out", out)
        self.assertEqual(result.exit_code, 0, result.output)
        with open(os.path.join(out, "study.csv"), encoding="utf-8") as handle:
            self.assertEqual(handle.readline().strip(), ",".join(STUDY_COLUMNS))
        frame = read_study_csv(os.path.join(out, "study.csv"))
        self.assertEqual(len(frame), 2)
        self.assertTrue((frame["ndof"].diff().dropna() > 0).all())
        with open(os.path.join(out, "estimators.csv"), encoding="utf-8") as handle:
            self.assertEqual(handle.readline().strip(), ",".join(ESTIMATOR_COLUMNS))

    def test_run_study_four_levels(self):
        """Test four uniform Morley levels on the manufactured problem."""
        config = parse_config(UNIFORM.replace("levels = 2", "levels = 4"))
        record = run_study(config, self.directory)
        frame = read_study_csv(os.path.join(self.directory, "study.csv"))
        self.assertEqual(len(frame), 4)
        self.assertEqual(len(record.levels), 4)
        self.assertTrue((frame["err_energy"].diff().dropna() < 0).all())

    def test_solve_with_plots_and_entities(self):
        """Test a single solve with SVG and per-entity output."""
        out = os.path.join(self.directory, "solve")
        config = self.write_config(UNIFORM + "\n[output]\nentities = true\n")
        result = self.invoke("solve", "-c", config, "-o", out, "--svg")
        self.assertEqual(result.exit_code, 0, result.output)
        for name in ("study.csv", "estimators.csv", "elements.csv", "edges.csv", "indicators.svg"):
            self.assertTrue(os.path.exists(os.path.join(out, name)), name)

    def test_adaptive_study(self):
        """Test the adapt command with a small dof budget."""
        out = os.path.join(self.directory, "adapt")
        result = self.invoke("adapt", "-c", self.write_config(UNIFORM.replace("levels = 2", "max_dofs = 60")),
                             "-o", out, "--svg")
        self.assertEqual(result.exit_code, 0, result.output)
        frame = read_study_csv(os.path.join(out, "study.csv"))
        self.assertGreaterEqual(len(frame), 1)
        self.assertTrue(os.path.exists(os.path.join(out, "study.svg")))

    def test_cr_demo(self):
        """Test the Crouzeix-Raviart demonstration."""
        out = os.path.join(self.directory, "cr")
        result = self.invoke("cr", "--levels", "2", "--out", out)
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertEqual(len(read_study_csv(os.path.join(out, "study.csv"))), 2)

    def test_invalid_config_exits_with_2(self):
        """Test configuration errors."""
        config = self.write_config("[scheme]\nname = argyris\n")
        result = self.invoke("study", "--config", config, "--out", self.directory)
        self.assertEqual(result.exit_code, 2)
        result = self.invoke("study", "--config", os.path.join(self.directory, "missing.ini"))
        self.assertEqual(result.exit_code, 2)

    def test_point_load_off_the_vertices_exits_with_2(self):
        """Test a point load the mesh cannot carry."""
        config = self.write_config(UNIFORM.replace("initial = 4", "initial = 2")
                                   + "\n[source]\nkind = center_point\n")
        result = self.invoke("solve", "--config", config, "--out", self.directory)
        self.assertEqual(result.exit_code, 2)

    def test_verify_selected_check(self):
        """Test a passing verification run."""
        result = self.invoke("verify", "--check", "symmetric-assembly", "--seed", "7")
        self.assertEqual(result.exit_code, 0, result.output)

    def test_verify_unknown_check(self):
        """Test an unknown check name."""
        result = self.invoke("verify", "--check", "no-such-check")
        self.assertEqual(result.exit_code, 2)

    def test_failed_check_exits_with_4(self):
        """Test that a failing property check sets exit code 4."""
        failing = lambda rng: CheckResult("always-fails", "never holds", False, 1.0, 0.0)
        with patch.dict(verification.CHECKS, {"always-fails": failing}):
            result = self.invoke("verify", "--check", "always-fails")
        self.assertEqual(result.exit_code, 4)

    def test_linear_algebra_failure_exits_with_3(self):
        """Test that numpy and scipy failures map to the numerical exit code."""
        config = self.write_config(UNIFORM)
        with patch("src.commands.run_commands.uniform_loop", side_effect=LinAlgError("eigenvalues did not converge")):
            result = self.invoke("study", "--config", config, "--out", self.directory)
        self.assertEqual(result.exit_code, 3)

    def test_verify_from_config(self):
        """Test a verification study configured in the INI file."""
        config = self.write_config("[study]\nkind = verify\nchecks = symmetric-assembly\n")
        result = self.invoke("study", "--config", config, "--out", self.directory)
        self.assertEqual(result.exit_code, 0, result.output)

    def test_thread_limit(self):
        """Test PLATE_THREADS validation."""
        out = os.path.join(self.directory, "threads")
        config = self.write_config(UNIFORM)
        result = self.invoke("study", "-c", config, "-o", out, env={"PLATE_THREADS": "1"})
        self.assertEqual(result.exit_code, 0, result.output)
        result = self.invoke("study", "-c", config, "-o", out, env={"PLATE_THREADS": "zero"})
        self.assertEqual(result.exit_code, 2)


if __name__ == "__main__":
    unittest.main()
