"""
Tests for triangulations: topology, geometry, point location and refinement.
"""

import os
import tempfile
import unittest

import numpy as np

from src.models.errors import MeshError, RefinementError
from src.models.mesh import build_mesh, lshape, read_mesh_file, refine_bisect, refine_uniform, unit_square


class TestMeshTopology(unittest.TestCase):
    """Counts, orientation and validation."""

    def setUp(self):
        self.square = unit_square(2)
        self.criss = unit_square(4)
        self.lshape = lshape()

    def test_counts_of_the_two_triangle_square(self):
        mesh = self.square
        self.assertEqual((mesh.num_vertices, mesh.num_triangles, mesh.num_edges), (4, 2, 5))
        self.assertEqual(int(mesh.interior_edges.sum()), 1)
        self.assertEqual(len(mesh.interior_vertices), 0)
        self.assertEqual(mesh.euler_characteristic, 1)
        self.assertEqual(mesh.boundary_components, 1)

    def test_criss_square_has_one_interior_vertex(self):
        self.assertEqual(list(self.criss.interior_vertices), [4])
        self.assertEqual(int(self.criss.interior_edges.sum()), 4)

    def test_lshape_area_and_boundary(self):
        self.assertAlmostEqual(self.lshape.areas.sum(), 3.0, places=14)
        self.assertEqual(self.lshape.boundary_components, 1)
        self.assertEqual(self.lshape.euler_characteristic, 1)

    def test_normals_point_out_of_the_plus_side(self):
        mesh = refine_uniform(self.lshape)
        plus = mesh.edge_triangles[:, 0]
        outward = np.einsum("ed,ed->e", mesh.normals, mesh.midpoints - mesh.centroids[plus])
        self.assertTrue((outward > 0).all())
        self.assertTrue((mesh.edge_triangles[mesh.interior_edges, 0]
                         < mesh.edge_triangles[mesh.interior_edges, 1]).all())

    def test_tangent_and_normal_are_orthonormal(self):
        mesh = refine_uniform(self.criss)
        np.testing.assert_allclose(np.linalg.norm(mesh.tangents, axis=1), 1.0, atol=1e-14)
        np.testing.assert_allclose(np.einsum("ed,ed->e", mesh.tangents, mesh.normals), 0.0, atol=1e-14)

    def test_clockwise_triangle_is_rejected(self):
        with self.assertRaises(MeshError):
            build_mesh([[0, 0], [1, 0], [0, 1]], [[0, 2, 1]])

    def test_degenerate_triangle_is_rejected(self):
        with self.assertRaises(MeshError):
            build_mesh([[0, 0], [1, 0], [2, 0]], [[0, 1, 2]])

    def test_disconnected_domain_is_rejected(self):
        vertices = [[0, 0], [1, 0], [0, 1], [5, 5], [6, 5], [5, 6]]
        with self.assertRaises(MeshError):
            build_mesh(vertices, [[0, 1, 2], [3, 4, 5]])

    def test_unused_vertex_is_rejected(self):
        with self.assertRaises(MeshError):
            build_mesh([[0, 0], [1, 0], [0, 1], [3, 3]], [[0, 1, 2]])

    def test_patches(self):
        mesh = self.criss
        self.assertEqual(sorted(mesh.vertex_patch(4)), [0, 1, 2, 3])
        self.assertEqual(mesh.vertex_patch_sizes[4], 4)
        boundary = int(np.flatnonzero(mesh.boundary_edges)[0])
        self.assertEqual(len(mesh.edge_patch(boundary)), 1)
        interior = int(np.flatnonzero(mesh.interior_edges)[0])
        self.assertEqual(len(mesh.edge_patch(interior)), 2)


class TestMeshGeometry(unittest.TestCase):
    def setUp(self):
        self.mesh = refine_uniform(unit_square(4))

    def test_locate_and_barycentric(self):
        rng = np.random.default_rng(7)
        points = rng.uniform(0.01, 0.99, size=(50, 2))
        tris = self.mesh.locate(points)
        self.assertTrue((tris >= 0).all())
        bary = self.mesh.barycentric(tris, points)
        self.assertTrue((bary >= -1e-12).all())
        back = self.mesh.to_physical(tris, bary[:, None, :])[:, 0]
        np.testing.assert_allclose(back, points, atol=1e-14)

    def test_locate_outside(self):
        self.assertEqual(int(self.mesh.locate([[1.5, 0.5]])[0]), -1)

    def test_find_vertex(self):
        self.assertEqual(self.mesh.find_vertex((0.5, 0.5)), 4)
        self.assertIsNone(self.mesh.find_vertex((0.3, 0.3)))

    def test_edges_on_segment(self):
        edges = self.mesh.edges_on_segment((0.0, 0.0), (1.0, 0.0))
        self.assertEqual(len(edges), 2)
        self.assertAlmostEqual(self.mesh.edge_lengths[edges].sum(), 1.0, places=14)
        with self.assertRaises(MeshError):
            self.mesh.edges_on_segment((0.0, 0.1), (1.0, 0.1))

    def test_shape_measures(self):
        self.assertAlmostEqual(self.mesh.min_angle(), np.pi / 4, places=12)
        self.assertGreater(self.mesh.shape_regularity(), 2.0)

    def write_mesh(self, directory, text):
        path = os.path.join(directory, "sq.msh")
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(text)
        return path

    def test_read_mesh_file(self):
        square = unit_square(2)
        lines = [f"{square.num_vertices} {square.num_triangles}"]
        lines += [f"{float(x)!r} {float(y)!r}" for x, y in square.vertices]
        lines += [" ".join(str(i) for i in tri) for tri in square.triangles]
        with tempfile.TemporaryDirectory() as directory:
            mesh = read_mesh_file(self.write_mesh(directory, "\n".join(lines) + "\n"))
        np.testing.assert_array_equal(mesh.vertices, square.vertices)
        np.testing.assert_array_equal(mesh.triangles, square.triangles)
        self.assertEqual(mesh.num_edges, square.num_edges)

    def test_read_mesh_file_without_trailing_newline(self):
        with tempfile.TemporaryDirectory() as directory:
            mesh = read_mesh_file(self.write_mesh(directory, "4 2\n0 0\n1 0\n1 1\n0 1\n0 1 2\n0 2 3"))
        self.assertEqual((mesh.num_vertices, mesh.num_triangles), (4, 2))
        self.assertAlmostEqual(mesh.areas.sum(), 1.0, places=14)

    def test_malformed_mesh_file(self):
        cases = {
            "4 2\n0 0\n1 0\n1 x\n0 1\n0 1 2\n0 2 3\n": ":4:",
            "4 2\n0 0\n1 0\n1 1\n0 1\n0 1 2 3\n0 2 3\n": ":6:",
            "4 two\n": ":1:",
            "4 2\n0 0\n1 0\n1 1\n0 1\n0 1 2\n": "header",
        }
        with tempfile.TemporaryDirectory() as directory:
            for text, fragment in cases.items():
                with self.assertRaises(MeshError) as caught:
                    read_mesh_file(self.write_mesh(directory, text))
                self.assertIn(fragment, str(caught.exception))

    def test_missing_mesh_file(self):
        with self.assertRaises(MeshError):
            read_mesh_file("/nonexistent/plate.mesh")


class TestRefinement(unittest.TestCase):
    def test_uniform_refinement_keeps_vertices(self):
        coarse = lshape()
        fine = refine_uniform(coarse)
        self.assertEqual(fine.num_triangles, 4 * coarse.num_triangles)
        np.testing.assert_array_equal(fine.vertices[:coarse.num_vertices], coarse.vertices)
        np.testing.assert_allclose(fine.vertices[coarse.num_vertices:], coarse.midpoints)
        self.assertAlmostEqual(fine.areas.sum(), 3.0, places=13)
        self.assertAlmostEqual(fine.hmax, 0.5 * coarse.hmax, places=14)

    def test_bisection_refines_marked_triangles(self):
        mesh = unit_square(4)
        fine = refine_bisect(mesh, [0])
        self.assertGreater(fine.num_triangles, mesh.num_triangles)
        self.assertAlmostEqual(fine.areas.sum(), 1.0, places=14)
        self.assertLess(fine.areas.min(), mesh.areas[0])

    def test_empty_marking_returns_same_mesh(self):
        mesh = unit_square(2)
        self.assertIs(refine_bisect(mesh, []), mesh)

    def test_out_of_range_marking(self):
        with self.assertRaises(RefinementError):
            refine_bisect(unit_square(2), [5])

    def test_repeated_corner_bisection_keeps_angles(self):
        mesh = unit_square(4)
        initial = mesh.min_angle()
        for _ in range(8):
            corner = mesh.locate([[1e-3, 1e-3]])
            mesh = refine_bisect(mesh, corner)
        self.assertAlmostEqual(mesh.areas.sum(), 1.0, places=13)
        # newest vertex bisection produces finitely many similarity classes
        self.assertGreaterEqual(mesh.min_angle(), 0.5 * initial - 1e-12)

    def test_all_marked_bisection_halves_areas(self):
        mesh = refine_uniform(unit_square(4))
        fine = refine_bisect(mesh, np.arange(mesh.num_triangles))
        self.assertGreaterEqual(fine.num_triangles, 2 * mesh.num_triangles)
        self.assertLessEqual(fine.areas.max(), 0.5 * mesh.areas.max() + 1e-15)


if __name__ == "__main__":
    unittest.main()
