"""
Tests for the Crouzeix-Raviart Poisson demonstration.
"""

import unittest

import numpy as np

from src.models.crouzeix_raviart import (
    KAPPA_CR,
    cr_interpolate,
    cr_poisson_demo,
    cr_solve,
    interpolation_ratio,
    poisson_exact,
)
from src.models.mesh import lshape, refine_uniform, unit_square
from src.models.verification import sine_h1_field


class TestCrouzeixRaviart(unittest.TestCase):
    def test_zero_load(self):
        u_cr = cr_solve(refine_uniform(unit_square(4)), lambda x, y: 0.0 * x)
        np.testing.assert_array_equal(u_cr.coefficients, 0.0)

    def test_interpolation_keeps_edge_means(self):
        mesh = refine_uniform(unit_square(4))
        interpolant = cr_interpolate(poisson_exact(), mesh)
        self.assertEqual(interpolant.dofmap.ndof, int(mesh.interior_edges.sum()))

    def test_interpolation_constant(self):
        for mesh in (refine_uniform(unit_square(4)), refine_uniform(lshape())):
            for k, l in ((1, 1), (2, 3)):
                self.assertLessEqual(interpolation_ratio(sine_h1_field(k, l), mesh), KAPPA_CR)

    def test_uniform_demo(self):
        record = cr_poisson_demo(levels=6)
        errors = record.column("err_energy")
        self.assertTrue((np.diff(errors) < 0).all())
        self.assertTrue((np.diff(record.column("ndof")) > 0).all())
        self.assertTrue((record.column("eff_index") > 0.0).all())
        slope = np.polyfit(np.log(record.column("hmax")[-3:]), np.log(errors[-3:]), 1)[0]
        self.assertAlmostEqual(slope, 1.0, delta=0.15)

    def test_jump_bound_constant_is_level_stable(self):
        record = cr_poisson_demo(levels=6)
        constants = np.array([level.totals["jump_bound_constant"] for level in record.levels[2:]])
        self.assertTrue((constants > 0.0).all())
        self.assertLessEqual(constants.max() / constants.min(), 2.0)


if __name__ == "__main__":
    unittest.main()
