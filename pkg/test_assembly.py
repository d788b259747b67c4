"""
Tests for scheme configuration, assembly, loads and linear solves.
"""

import unittest

import numpy as np
from pydantic import ValidationError
from scipy import sparse

from src.models.assembly import (
    SCHEMES,
    LinearSystem,
    SchemeConfig,
    assemble,
    assemble_matrix,
    assemble_rhs,
    estimate_H_constant,
    estimate_ellipticity,
    gram,
    load_vector,
    solve,
    solve_linear,
)
from src.models.basisquad import quad_macro, quad_triangle
from src.models.errors import SolverError, SourceError
from src.models.estimate import energy_error
from src.models.manufactured import manufactured_square
from src.models.mesh import refine_uniform, unit_square
from src.models.sources import LineLoad, PointLoad, SourceSpec
from src.models.spaces import DiscreteField, build_space, dofmap, edge_traces
from src.models.transfer import companion, hessian_inner, smoother_matrix


def integral(field, degree=6):
    mesh = field.mesh
    rule = quad_macro(degree) if field.dofmap.kind == "HCT" else quad_triangle(degree)
    tris = np.arange(mesh.num_triangles)
    values, _, _ = field.evaluate(tris, rule.points, rule.sub)
    return float(np.sum(values * rule.weights[None, :] * 2.0 * mesh.areas[:, None]))


class TestSchemeConfig(unittest.TestCase):
    def test_defaults(self):
        config = SchemeConfig(name="dg1")
        self.assertEqual((config.theta, config.sigma1, config.sigma2, config.smoother), (1.0, 20.0, 20.0, "identity"))
        self.assertTrue(config.nominally_symmetric)
        self.assertFalse(SchemeConfig(name="dg2", theta=-1.0).nominally_symmetric)
        self.assertTrue(SchemeConfig(name="c0ip", theta=0.0).nominally_symmetric)

    def test_invalid_values(self):
        with self.assertRaises(ValidationError):
            SchemeConfig(name="argyris")
        with self.assertRaises(ValidationError):
            SchemeConfig(name="dg1", theta=2.0)
        with self.assertRaises(ValidationError):
            SchemeConfig(name="dg1", sigma1=0.0)
        with self.assertRaises(ValidationError):
            SchemeConfig(name="morley", penalty=3.0)


class TestMatrices(unittest.TestCase):
    def setUp(self):
        self.mesh = refine_uniform(unit_square(4))

    def test_symmetric_schemes(self):
        for name in SCHEMES:
            matrix = assemble_matrix(self.mesh, SchemeConfig(name=name))
            asym = abs(matrix - matrix.T).max()
            self.assertLessEqual(asym, 1e-12 * abs(matrix).max(), msg=name)

    def test_nonsymmetric_dg(self):
        system = assemble(self.mesh, SchemeConfig(name="dg1", theta=0.0), SourceSpec.l2(lambda x, y: 1.0 + 0 * x))
        self.assertFalse(system.symmetric)
        self.assertGreater(abs(system.matrix - system.matrix.T).max(), 1e-8)

    def test_morley_matrix_is_the_piecewise_energy(self):
        morley = build_space(self.mesh, "morley")
        matrix = assemble_matrix(self.mesh, SchemeConfig(name="morley"))
        v = np.random.default_rng(2).standard_normal(morley.ndof)
        self.assertAlmostEqual(v @ matrix @ v, hessian_inner(DiscreteField(morley, v)), places=8)
        self.assertEqual(abs(matrix - gram(morley)).max(), 0.0)

    def test_ellipticity(self):
        self.assertAlmostEqual(estimate_ellipticity(self.mesh, SchemeConfig(name="morley")), 1.0, places=8)
        for name in ("dg1", "dg2", "c0ip", "wopsip"):
            self.assertGreater(estimate_ellipticity(self.mesh, SchemeConfig(name=name)), 0.0, msg=name)

    def test_h_constant_sampling(self):
        estimate = estimate_H_constant(self.mesh, SchemeConfig(name="dg1"), samples=10)
        self.assertGreaterEqual(estimate.value, 0.0)
        self.assertGreater(estimate.samples, 0)


class TestLoads(unittest.TestCase):
    def setUp(self):
        self.mesh = refine_uniform(unit_square(4))
        self.rng = np.random.default_rng(17)
        self.one = SourceSpec.l2(lambda x, y: np.ones_like(x))

    def test_constant_load_integrates_fields(self):
        for space in ("dg", "c0ip", "morley"):
            dm = build_space(self.mesh, space)
            v = DiscreteField(dm, self.rng.standard_normal(dm.ndof))
            self.assertAlmostEqual(load_vector(dm, self.one) @ v.coefficients, integral(v), places=12, msg=space)

    def test_load_on_hct_space(self):
        morley = build_space(self.mesh, "morley")
        field = companion(DiscreteField(morley, self.rng.standard_normal(morley.ndof)))
        self.assertAlmostEqual(load_vector(field.dofmap, self.one) @ field.coefficients, integral(field), places=12)

    def test_point_load_picks_the_vertex_value(self):
        mesh = unit_square(4)
        source = SourceSpec(point_loads=[PointLoad((0.5, 0.5), 2.5)])
        for space in ("morley", "c0ip"):
            b = load_vector(build_space(mesh, space), source)
            np.testing.assert_allclose(b, [2.5, 0.0, 0.0, 0.0, 0.0], atol=1e-12)

    def test_point_load_on_the_boundary_is_rejected(self):
        source = SourceSpec(point_loads=[PointLoad((0.0, 0.0), 1.0)])
        with self.assertRaises(SourceError):
            assemble_rhs(self.mesh, SchemeConfig(name="morley"), source)

    def test_line_load_integrates_traces(self):
        load = LineLoad(0, [((0.0, 0.0), (1.0, 1.0))], lambda x, y: np.ones_like(x))
        dm = build_space(self.mesh, "c0ip")
        v = DiscreteField(dm, self.rng.standard_normal(dm.ndof))
        b = load_vector(dm, SourceSpec(line_loads=[load]))
        edges = load.edges(self.mesh)
        t = np.array([0.5 - np.sqrt(3.0) / 6.0, 0.5 + np.sqrt(3.0) / 6.0])
        traces = edge_traces(v, t).average(0)[edges]
        expected = float(np.sum(traces.mean(axis=1) * self.mesh.edge_lengths[edges]))
        self.assertAlmostEqual(b @ v.coefficients, expected, places=12)

    def test_smoothed_rhs(self):
        config = SchemeConfig(name="dg1", smoother="jh")
        dm = dofmap(self.mesh, "dg1")
        expected = smoother_matrix(dm).T @ load_vector(build_space(self.mesh, "hct"), self.one)
        np.testing.assert_allclose(assemble_rhs(self.mesh, config, self.one), expected)


class TestSolve(unittest.TestCase):
    def test_zero_rhs(self):
        system = LinearSystem(sparse.identity(3, format="csr"), np.zeros(3), True, None)
        np.testing.assert_array_equal(solve_linear(system), np.zeros(3))

    def test_singular_matrix(self):
        matrix = sparse.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
        with self.assertRaises(SolverError) as caught:
            solve_linear(LinearSystem(matrix, np.array([1.0, 0.0]), True, None))
        self.assertIsNotNone(caught.exception.smallest_pivot)
        self.assertIn("smallest pivot", str(caught.exception))
        self.assertEqual(caught.exception.exit_code, 3)

    def test_badly_scaled_system(self):
        scale = np.array([1e-6, 1.0, 1e6])
        matrix = sparse.diags(scale) @ sparse.csr_matrix(np.array([[4.0, 1.0, 0.0], [1.0, 4.0, 1.0], [0.0, 1.0, 4.0]]))
        rhs = np.array([1e-6, 2.0, -3e6])
        x = solve_linear(LinearSystem(matrix, rhs, False, None))
        np.testing.assert_allclose(matrix @ x, rhs, rtol=1e-10, atol=1e-10 * np.linalg.norm(rhs))

    def test_every_scheme_solves_on_2048_triangles(self):
        case = manufactured_square()
        mesh = unit_square(2)
        for _ in range(5):
            mesh = refine_uniform(mesh)
        self.assertEqual(mesh.num_triangles, 2048)
        for name in SCHEMES:
            u_h = solve(mesh, SchemeConfig(name=name), case.source)
            self.assertTrue(np.isfinite(u_h.coefficients).all(), msg=name)

    def test_morley_converges_on_the_manufactured_problem(self):
        case = manufactured_square()
        mesh = refine_uniform(unit_square(2))
        errors = []
        for _ in range(3):
            mesh = refine_uniform(mesh)
            u_h = solve(mesh, SchemeConfig(name="morley"), case.source)
            errors.append(energy_error(u_h, case.exact).pw)
        self.assertLess(errors[1], 0.7 * errors[0])
        self.assertLess(errors[2], 0.7 * errors[1])

    def test_penalty_schemes_solve(self):
        case = manufactured_square()
        mesh = refine_uniform(refine_uniform(unit_square(4)))
        for name in ("dg1", "dg2", "c0ip", "wopsip"):
            u_h = solve(mesh, SchemeConfig(name=name), case.source)
            error = energy_error(u_h, case.exact)
            self.assertTrue(np.isfinite(error.h), msg=name)
            self.assertGreaterEqual(error.h, error.pw)


if __name__ == "__main__":
    unittest.main()
