"""
Tests for the transfer operators I_M, I_C, J and J_h.
"""

import unittest

import numpy as np

from src.models.basisquad import quad_triangle
from src.models.errors import TransferError
from src.models.mesh import lshape, refine_uniform, unit_square
from src.models.spaces import DiscreteField, build_space, jh_functionals
from src.models.transfer import (
    c0_transfer_matrix,
    companion,
    companion_matrix,
    h_distance,
    hessian_inner,
    interpolate_morley,
    morley_interpolation_matrix,
    operator_report,
    smoother,
    smoother_matrix,
    to_broken,
    transfer_c0,
)
from src.models.verification import bubble_field


class TestCompanion(unittest.TestCase):
    def setUp(self):
        self.meshes = [refine_uniform(unit_square(4)), refine_uniform(lshape())]
        self.rng = np.random.default_rng(20240101)

    def test_right_inverse_of_morley_interpolation(self):
        for mesh in self.meshes:
            morley = build_space(mesh, "morley")
            chain = morley_interpolation_matrix(build_space(mesh, "hct")) @ companion_matrix(mesh)
            for _ in range(10):
                v = self.rng.standard_normal(morley.ndof)
                np.testing.assert_allclose(chain @ v, v, atol=1e-11)

    def test_companion_is_conforming(self):
        mesh = self.meshes[1]
        morley = build_space(mesh, "morley")
        v = DiscreteField(morley, self.rng.standard_normal(morley.ndof))
        np.testing.assert_allclose(jh_functionals(companion(v)), 0.0, atol=1e-10)

    def test_companion_needs_morley_input(self):
        dg = build_space(self.meshes[0], "dg")
        with self.assertRaises(TransferError):
            companion(DiscreteField(dg, np.zeros(dg.ndof)))

    def test_smoother_composes_companion_and_interpolation(self):
        mesh = self.meshes[0]
        dg = build_space(mesh, "dg")
        v = DiscreteField(dg, self.rng.standard_normal(dg.ndof))
        np.testing.assert_allclose(smoother(v).coefficients, companion(interpolate_morley(v)).coefficients,
                                   atol=1e-12)
        self.assertIs(smoother_matrix(dg), smoother_matrix(dg))


class TestMorleyInterpolation(unittest.TestCase):
    def setUp(self):
        self.mesh = refine_uniform(refine_uniform(unit_square(4)))
        self.rng = np.random.default_rng(5)

    def test_identity_on_morley(self):
        morley = build_space(self.mesh, "morley")
        matrix = morley_interpolation_matrix(morley).toarray()
        np.testing.assert_allclose(matrix, np.eye(morley.ndof), atol=1e-12)

    def test_hessian_is_the_elementwise_mean(self):
        mesh = self.mesh
        v = bubble_field(1.0, 0.5, -0.3)
        rule = quad_triangle(10)
        tris = np.arange(mesh.num_triangles)
        xy = mesh.to_physical(tris, rule.points)
        means = 2.0 * np.einsum("tqab,q->tab", v.hessian(xy[..., 0], xy[..., 1]), rule.weights)
        _, _, discrete = interpolate_morley(v, mesh).evaluate(tris, np.full((1, 3), 1.0 / 3.0))
        np.testing.assert_allclose(discrete[:, 0], means, atol=1e-9)

    def test_closed_form_needs_a_mesh(self):
        with self.assertRaises(TransferError):
            interpolate_morley(bubble_field(1.0, 0.0, 0.0))

    def test_interpolation_of_c0_field_keeps_vertex_values(self):
        c0 = build_space(self.mesh, "c0ip")
        v = DiscreteField(c0, self.rng.standard_normal(c0.ndof))
        inner = len(self.mesh.interior_vertices)
        np.testing.assert_allclose(interpolate_morley(v).coefficients[:inner], v.coefficients[:inner], atol=1e-12)


class TestLagrangeTransfer(unittest.TestCase):
    def setUp(self):
        self.mesh = refine_uniform(lshape())
        self.rng = np.random.default_rng(9)

    def test_transfer_is_continuous(self):
        morley = build_space(self.mesh, "morley")
        v = DiscreteField(morley, self.rng.standard_normal(morley.ndof))
        w = transfer_c0(v)
        self.assertEqual(w.space, "c0ip")
        np.testing.assert_allclose(jh_functionals(w)[:, :2], 0.0, atol=1e-12)
        self.assertEqual(c0_transfer_matrix(self.mesh).shape, (w.dofmap.ndof, morley.ndof))

    def test_broken_copy_evaluates_identically(self):
        morley = build_space(self.mesh, "morley")
        v = DiscreteField(morley, self.rng.standard_normal(morley.ndof))
        broken = to_broken(v)
        tris = np.arange(self.mesh.num_triangles)
        bary = quad_triangle(4).points
        for a, b in zip(v.evaluate(tris, bary), broken.evaluate(tris, bary)):
            np.testing.assert_allclose(a, b, atol=1e-10)
        self.assertIs(to_broken(broken), broken)


class TestDiagnostics(unittest.TestCase):
    def test_distance_and_report(self):
        mesh = refine_uniform(unit_square(4))
        rng = np.random.default_rng(1)
        morley = build_space(mesh, "morley")
        v = DiscreteField(morley, rng.standard_normal(morley.ndof))
        self.assertLess(h_distance(v, v), 1e-5 * np.sqrt(hessian_inner(v)))
        j = companion(v)
        report = operator_report(v, j, ["J"])
        self.assertEqual((report.input_space, report.output_space), ("morley", "hct"))
        self.assertGreater(report.distance_h, 0.0)
        self.assertAlmostEqual(report.output_energy ** 2, hessian_inner(j), delta=1e-10 * hessian_inner(j))


if __name__ == "__main__":
    unittest.main()
