"""
Tests for the model problems with known data.
"""

import unittest

import numpy as np
from numpy.polynomial import polynomial as npoly

from src.models.basisquad import quad_triangle
from src.models.manufactured import (
    center_point_load,
    manufactured_square,
    plate_gradient,
    plate_hessian,
    plate_load,
    plate_value,
    zero_case,
)
from src.models.mesh import refine_uniform, unit_square


class TestManufacturedSquare(unittest.TestCase):
    def test_values(self):
        self.assertAlmostEqual(float(plate_value(0.5, 0.5)), 1.0 / 256.0, places=15)
        self.assertAlmostEqual(float(plate_load(0.0, 0.0)), 8.0, places=14)

    def test_clamped_boundary(self):
        t = np.linspace(0.0, 1.0, 26)
        for x, y in ((t, 0 * t), (t, 0 * t + 1.0), (0 * t, t), (0 * t + 1.0, t)):
            np.testing.assert_allclose(plate_value(x, y), 0.0, atol=1e-15)
            np.testing.assert_allclose(plate_gradient(x, y), 0.0, atol=1e-15)

    def test_hessian_is_symmetric(self):
        h = plate_hessian(np.array([0.3]), np.array([0.7]))
        self.assertEqual(h.shape, (1, 2, 2))
        self.assertEqual(h[0, 0, 1], h[0, 1, 0])

    def test_load_work_equals_energy(self):
        mesh = refine_uniform(refine_uniform(refine_uniform(unit_square(4))))
        rule = quad_triangle(10)
        tris = np.arange(mesh.num_triangles)
        xy = mesh.to_physical(tris, rule.points)
        x, y = xy[..., 0], xy[..., 1]
        weights = rule.weights[None, :] * 2.0 * mesh.areas[:, None]
        work = np.sum(weights * plate_load(x, y) * plate_value(x, y))
        energy = np.sum(weights * np.sum(plate_hessian(x, y) ** 2, axis=(-1, -2)))
        self.assertAlmostEqual(work, 4.0 / 1225.0, delta=1e-9)
        self.assertAlmostEqual(energy, 4.0 / 1225.0, delta=1e-9)


# Δ²u for u = (x(1 - x) y(1 - y))², expanded by hand; entry [i, j] multiplies xⁱ yʲ.
RECORDED_LOAD = np.array([
    [8.0, -48.0, 72.0, -48.0, 24.0],
    [-48.0, 288.0, -288.0, 0.0, 0.0],
    [72.0, -288.0, 288.0, 0.0, 0.0],
    [-48.0, 0.0, 0.0, 0.0, 0.0],
    [24.0, 0.0, 0.0, 0.0, 0.0],
])


def padded(c, shape=(5, 5)):
    out = np.zeros(shape)
    out[:c.shape[0], :c.shape[1]] = c
    return out


class TestSymbolicLoad(unittest.TestCase):
    """Compare the closed forms with polynomial differentiation of u."""

    def setUp(self):
        p = np.array([0.0, 0.0, 1.0, -2.0, 1.0])
        self.u = np.outer(p, p)
        self.points = np.random.default_rng(5).uniform(-0.5, 1.5, size=(40, 2))

    def test_recorded_expansion(self):
        dxxxx = npoly.polyder(self.u, 4, axis=0)
        dxxyy = npoly.polyder(npoly.polyder(self.u, 2, axis=0), 2, axis=1)
        dyyyy = npoly.polyder(self.u, 4, axis=1)
        bilaplacian = padded(dxxxx) + 2.0 * padded(dxxyy) + padded(dyyyy)
        np.testing.assert_allclose(bilaplacian, RECORDED_LOAD, atol=1e-12)

    def test_load_matches_the_expansion(self):
        x, y = self.points.T
        np.testing.assert_allclose(plate_load(x, y), npoly.polyval2d(x, y, RECORDED_LOAD), rtol=1e-12, atol=1e-10)

    def test_hessian_matches_differentiation(self):
        x, y = self.points.T
        hessian = plate_hessian(x, y)
        expected = {
            (0, 0): npoly.polyder(self.u, 2, axis=0),
            (0, 1): npoly.polyder(npoly.polyder(self.u, 1, axis=0), 1, axis=1),
            (1, 1): npoly.polyder(self.u, 2, axis=1),
        }
        for (a, b), c in expected.items():
            np.testing.assert_allclose(hessian[:, a, b], npoly.polyval2d(x, y, c), rtol=1e-12, atol=1e-12)


class TestCases(unittest.TestCase):
    def test_case_data(self):
        case = manufactured_square()
        self.assertTrue(case.source.is_l2)
        self.assertIsNotNone(case.exact)
        point = center_point_load(3.0)
        self.assertIsNone(point.exact)
        self.assertEqual(point.source.point_loads[0].intensity, 3.0)
        self.assertTrue(zero_case("lshape").source.is_zero)


if __name__ == "__main__":
    unittest.main()
