"""
Convergence and estimator studies on the manufactured square problem.

This script runs uniform refinement from h = 1/2 down to h = 1/64 and checks:
- Energy-error slopes of every scheme
- Efficiency-index bands of the primary estimators
- Equivalence of the two jump-estimator families
- The adaptive point-load study against uniform refinement
"""

import unittest

import numpy as np

from src.models.adapt import adaptive_loop, uniform_loop
from src.models.assembly import SchemeConfig
from src.models.manufactured import center_point_load, manufactured_square
from src.models.mesh import refine_uniform, unit_square

LEVELS = 6
STUDIES = {
    "morley": SchemeConfig(name="morley"),
    "morley/jh": SchemeConfig(name="morley", smoother="jh"),
    "dg1": SchemeConfig(name="dg1"),
    "dg2": SchemeConfig(name="dg2"),
    "c0ip": SchemeConfig(name="c0ip"),
    "wopsip": SchemeConfig(name="wopsip"),
}


def fitted_slope(x, y):
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


class TestUniformStudies(unittest.TestCase):
    """Test case for uniform refinement of every scheme."""

    @classmethod
    def setUpClass(cls):
        """Run every study once; h is 2^-1 on the first level."""
        case = manufactured_square()
        start = refine_uniform(unit_square(2))
        cls.records = {key: uniform_loop(start, config, case, levels=LEVELS) for key, config in STUDIES.items()}

    def test_finest_level(self):
        for key, record in self.records.items():
            self.assertEqual(record.levels[-1].num_triangles, 8 * 4 ** (LEVELS - 1), msg=key)

    def test_error_slopes(self):
        for key, record in self.records.items():
            h = record.column("hmax")[-3:]
            slope = fitted_slope(h, record.column("err_energy")[-3:])
            tolerance = 0.15 if key.startswith("morley") else 0.2
            self.assertAlmostEqual(slope, 1.0, delta=tolerance, msg=key)

    def test_efficiency_bands(self):
        for key, record in self.records.items():
            eff = record.column("eff_index")[2:]
            self.assertTrue(np.isfinite(eff).all() and (eff > 0.0).all(), msg=key)
            self.assertLessEqual(eff.max() / eff.min(), 3.0, msg=key)

    def test_smoothed_estimator_is_the_primary_one(self):
        totals = self.records["morley/jh"].levels[-1].totals
        self.assertEqual(self.records["morley/jh"].levels[-1].est_theorem, totals["general_source/hessian_jumps"])
        self.assertIn("l2_source/hessian_jumps", totals)

    def test_jump_families_are_equivalent(self):
        for key, record in self.records.items():
            ratios = record.column("estA")[1:] / record.column("estB")[1:]
            self.assertTrue((ratios >= 0.5 * ratios[0]).all() and (ratios <= 2.0 * ratios[0]).all(),
                            msg=f"{key}: {ratios}")


class TestPointLoadStudy(unittest.TestCase):
    """Test case for the adaptive study with a point force at the centre."""

    @classmethod
    def setUpClass(cls):
        config = SchemeConfig(name="morley", smoother="jh")
        case = center_point_load()
        cls.adaptive = adaptive_loop(unit_square(4), config, case, max_dofs=10 ** 6, theta=0.5, max_levels=8)
        cls.uniform = uniform_loop(unit_square(4), config, case, levels=4)

    def test_estimator_decreases_strictly(self):
        estimator = self.adaptive.column("est_theorem")
        self.assertGreaterEqual(len(estimator), 5)
        self.assertTrue((np.diff(estimator) < 0.0).all(), msg=str(estimator))

    def test_adaptive_rate_is_not_worse_than_uniform(self):
        adaptive = fitted_slope(self.adaptive.column("ndof")[1:], self.adaptive.column("est_theorem")[1:])
        uniform = fitted_slope(self.uniform.column("ndof")[1:], self.uniform.column("est_theorem")[1:])
        self.assertLess(adaptive, 0.0)
        self.assertLessEqual(adaptive, uniform + 0.1)


if __name__ == "__main__":
    unittest.main()
