"""
Tests for reading and validating run configurations.
"""

import os
import tempfile
import unittest

from src.config import RunConfig, load_config, parse_config
from src.models.errors import ConfigError

FULL = """\
[mesh]
domain = square
initial = 4
refinements = 1

[scheme]
name = dg1
theta = -1
sigma1 = 10

[source]
kind = general
f00 = 1.0   # uniform pressure
point_loads = 0.5 0.5 2.0
line_loads0 = 0 0 1 1 0.5

[study]
kind = adaptive
theta = 0.3
checks = symmetric-assembly, l2-pythagoras

[output]
svg = true
"""


class TestParseConfig(unittest.TestCase):
    def test_empty_configuration_uses_defaults(self):
        config = parse_config("")
        self.assertEqual(config, RunConfig())
        self.assertEqual(config.scheme.name, "morley")
        self.assertEqual((config.study.kind, config.study.levels), ("uniform", 4))

    def test_full_configuration(self):
        config = parse_config(FULL)
        self.assertEqual((config.scheme.name, config.scheme.theta, config.scheme.sigma1), ("dg1", -1.0, 10.0))
        self.assertEqual(config.source.point_loads, [(0.5, 0.5, 2.0)])
        self.assertEqual(config.study.checks, ["symmetric-assembly", "l2-pythagoras"])
        self.assertTrue(config.output.svg)
        mesh = config.build_mesh()
        self.assertEqual(mesh.num_triangles, 16)
        case = config.build_case()
        self.assertIsNone(case.exact)
        self.assertEqual(set(case.source.volume), {(0, 0)})
        self.assertEqual((len(case.source.point_loads), len(case.source.line_loads)), (1, 1))

    def test_invalid_value_names_field_and_line(self):
        with self.assertRaises(ConfigError) as caught:
            parse_config("[mesh]\ndomain = square\n\n[scheme]\nname = argyris\n")
        self.assertEqual((caught.exception.field, caught.exception.line), ("scheme.name", 5))
        self.assertEqual(caught.exception.exit_code, 2)

    def test_unknown_key(self):
        with self.assertRaises(ConfigError) as caught:
            parse_config("[study]\nlevels = 3\nbudget = 10\n")
        self.assertEqual((caught.exception.field, caught.exception.line), ("study.budget", 3))

    def test_unknown_section(self):
        with self.assertRaises(ConfigError) as caught:
            parse_config("[solver]\nname = lu\n")
        self.assertEqual(caught.exception.line, 1)

    def test_out_of_range_values(self):
        for text in ("[mesh]\ninitial = 3\n", "[mesh]\nrefinements = 9\n", "[study]\ntheta = 0\n",
                     "[source]\ndegree = 5\n", "[mesh]\ndomain = disk\n"):
            with self.assertRaises(ConfigError, msg=text):
                parse_config(text)

    def test_malformed_point_loads(self):
        with self.assertRaises(ConfigError) as caught:
            parse_config("[source]\nkind = general\npoint_loads = 0.5 0.5\n")
        self.assertEqual(caught.exception.field, "source.point_loads")

    def test_manufactured_load_needs_the_square(self):
        with self.assertRaises(ConfigError):
            parse_config("[mesh]\ndomain = lshape\n")
        config = parse_config("[mesh]\ndomain = lshape\n[source]\nkind = zero\n")
        self.assertTrue(config.build_case().source.is_zero)

    def test_syntax_error(self):
        with self.assertRaises(ConfigError):
            parse_config("[mesh\ndomain = square\n")


class TestLoadConfig(unittest.TestCase):
    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            load_config("/nonexistent/plate.ini")

    def test_mesh_file_domain(self):
        with tempfile.TemporaryDirectory() as directory:
            mesh_path = os.path.join(directory, "tri.mesh")
            with open(mesh_path, "w", encoding="utf-8") as handle:
                handle.write("3 1\n0 0\n1 0\n0 1\n0 1 2\n")
            config_path = os.path.join(directory, "run.ini")
            with open(config_path, "w", encoding="utf-8") as handle:
                handle.write(f"[mesh]\ndomain = file:{mesh_path}\n[source]\nkind = zero\n")
            config = load_config(config_path)
            self.assertEqual(config.build_mesh().num_triangles, 1)


if __name__ == "__main__":
    unittest.main()
