"""
Triangulations: construction, topology, geometry and refinement.

Conventions used throughout the package:

* triangles are stored counterclockwise; local edge ``i`` is opposite local
  vertex ``i`` and runs from local vertex ``i+1`` to ``i+2``;
* every edge E has a plus side T₊ (the adjacent triangle with the smaller id)
  and, for interior edges, a minus side T₋;
* the edge endpoints (A, B) are stored in the counterclockwise order of T₊,
  so τ_E = (B - A) / h_E and ν_E, the outward unit normal of T₊, is τ_E
  rotated by -90 degrees.
"""

import logging
import os
from functools import cached_property

import numpy as np
from matplotlib.tri import Triangulation
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from src.models.errors import MeshError, RefinementError

logger = logging.getLogger(__name__)

# local vertex pairs (start, end) of local edges 0, 1, 2
LOCAL_EDGES = np.array([[1, 2], [2, 0], [0, 1]])


class Mesh:
    """
    Conforming triangulation of a bounded connected polygonal domain.

    Instances are treated as immutable; derived quantities are computed once
    on first access.
    """

    def __init__(self, vertices, triangles, refinement_edge=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        # spaces and operator matrices built on this mesh
        self.cache = {}
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshError("vertices must be an (n, 2) array")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3 or len(self.triangles) == 0:
            raise MeshError("triangles must be a non-empty (n, 3) array")
        if self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices):
            raise MeshError("triangle references a vertex that does not exist")

        self._check_geometry()
        self._build_topology()
        self._check_connected()

        if refinement_edge is None:
            refinement_edge = self._longest_edge_labels()
        self.refinement_edge = np.asarray(refinement_edge, dtype=np.int64)
        if self.refinement_edge.shape != (self.num_triangles,):
            raise MeshError("one refinement edge per triangle is required")

    def __repr__(self):
        return (f"Mesh(vertices={self.num_vertices}, triangles={self.num_triangles}, "
                f"edges={self.num_edges})")

    # ------------------------------------------------------------------ #
    # construction checks
    # ------------------------------------------------------------------ #
    def _check_geometry(self):
        tri = self.triangles
        if ((tri[:, 0] == tri[:, 1]) | (tri[:, 1] == tri[:, 2]) | (tri[:, 0] == tri[:, 2])).any():
            raise MeshError("degenerate triangle with a repeated vertex")
        p = self.vertices[tri]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        signed = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        lengths = np.linalg.norm(p[:, [1, 2, 0]] - p[:, [2, 0, 1]], axis=2)
        scale = lengths.max(axis=1) ** 2
        degenerate = np.abs(signed) <= 1e-12 * scale
        if degenerate.any():
            raise MeshError(f"degenerate triangle {int(np.flatnonzero(degenerate)[0])}")
        if (signed < 0).any():
            raise MeshError(f"triangle {int(np.flatnonzero(signed < 0)[0])} is not counterclockwise")
        self.areas = signed
        self.local_edge_lengths = lengths
        self.diameters = lengths.max(axis=1)

    def _build_topology(self):
        nt = self.num_triangles
        directed = self.triangles[:, LOCAL_EDGES].reshape(-1, 2)
        keys = np.sort(directed, axis=1)
        _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        if (counts > 2).any():
            raise MeshError("non-manifold edge shared by more than two triangles")

        occurrences = np.arange(3 * nt)
        order = np.lexsort((occurrences, inverse))
        starts = np.concatenate([[0], np.flatnonzero(np.diff(inverse[order])) + 1])
        plus = order[starts]
        interior = counts == 2
        minus = np.full(len(counts), -1)
        minus[interior] = order[starts[interior] + 1]

        plus_dir = directed[plus]
        if interior.any():
            minus_dir = directed[minus[interior]]
            if not np.array_equal(minus_dir, plus_dir[interior][:, ::-1]):
                raise MeshError("inconsistent orientation: neighbours traverse a shared edge in the same direction")

        self.edges = plus_dir
        self.edge_triangles = np.stack([plus // 3, np.where(minus >= 0, minus // 3, -1)], axis=1)
        self.edge_local = np.stack([plus % 3, np.where(minus >= 0, minus % 3, -1)], axis=1)
        self.triangle_edges = inverse.reshape(nt, 3)
        self.interior_edges = interior
        self.boundary_edges = ~interior

        boundary_vertices = np.zeros(self.num_vertices, dtype=bool)
        boundary_vertices[self.edges[self.boundary_edges].ravel()] = True
        used = np.zeros(self.num_vertices, dtype=bool)
        used[self.triangles.ravel()] = True
        if not used.all():
            raise MeshError("mesh contains vertices that belong to no triangle")
        self.boundary_vertices = boundary_vertices

        tangent = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        self.edge_lengths = np.linalg.norm(tangent, axis=1)
        self.tangents = tangent / self.edge_lengths[:, None]
        self.normals = np.stack([self.tangents[:, 1], -self.tangents[:, 0]], axis=1)
        self.midpoints = 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])

    def _check_connected(self):
        inner = np.flatnonzero(self.interior_edges)
        a, b = self.edge_triangles[inner, 0], self.edge_triangles[inner, 1]
        graph = sparse.coo_matrix((np.ones(len(inner)), (a, b)),
                                  shape=(self.num_triangles, self.num_triangles))
        count, _ = connected_components(graph, directed=False)
        if count != 1:
            raise MeshError(f"domain is not connected ({count} components)")

    def _longest_edge_labels(self):
        lengths = self.local_edge_lengths
        longest = lengths >= lengths.max(axis=1, keepdims=True) * (1.0 - 1e-12)
        opposite = np.where(longest, self.triangles, np.iinfo(np.int64).max)
        return np.argmin(opposite, axis=1)

    # ------------------------------------------------------------------ #
    # sizes and derived geometry
    # ------------------------------------------------------------------ #
    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_triangles(self):
        return len(self.triangles)

    @property
    def num_edges(self):
        return len(self.edges)

    @cached_property
    def coordinates(self):
        """Vertex coordinates per triangle, shape (nt, 3, 2)."""
        return self.vertices[self.triangles]

    @cached_property
    def centroids(self):
        return self.coordinates.mean(axis=1)

    @cached_property
    def interior_vertices(self):
        return np.flatnonzero(~self.boundary_vertices)

    @cached_property
    def hmax(self):
        return float(self.diameters.max())

    @cached_property
    def vertex_triangle_incidence(self):
        """Sparse (nv, nt) incidence matrix of vertices and triangles."""
        nt = self.num_triangles
        rows = self.triangles.ravel()
        cols = np.repeat(np.arange(nt), 3)
        return sparse.csr_matrix((np.ones(3 * nt), (rows, cols)), shape=(self.num_vertices, nt))

    @cached_property
    def vertex_patch_sizes(self):
        """|T(z)| for every vertex z."""
        return np.diff(self.vertex_triangle_incidence.indptr)

    def vertex_patch(self, z):
        """Triangles T(z) sharing vertex ``z``."""
        m = self.vertex_triangle_incidence
        return m.indices[m.indptr[z]:m.indptr[z + 1]]

    def edge_patch(self, e):
        """Triangles of ω(E): one for boundary edges, two otherwise."""
        tris = self.edge_triangles[e]
        return tris[tris >= 0]

    @cached_property
    def boundary_components(self):
        """Number of closed boundary curves."""
        edges = self.edges[self.boundary_edges]
        graph = sparse.coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])),
                                  shape=(self.num_vertices, self.num_vertices))
        _, labels = connected_components(graph, directed=False)
        return len(np.unique(labels[self.boundary_vertices]))

    @property
    def euler_characteristic(self):
        return self.num_vertices - self.num_edges + self.num_triangles

    def shape_regularity(self):
        """max over triangles of h_T / ρ_T with ρ_T the inradius."""
        perimeter = self.local_edge_lengths.sum(axis=1)
        inradius = 2.0 * self.areas / perimeter
        return float((self.diameters / inradius).max())

    def min_angle(self):
        """Smallest interior angle of the triangulation in radians."""
        a, b, c = self.local_edge_lengths.T
        lengths = np.stack([a, b, c], axis=1)
        angles = []
        for i in range(3):
            opp = lengths[:, i]
            s1 = lengths[:, (i + 1) % 3]
            s2 = lengths[:, (i + 2) % 3]
            cosine = np.clip((s1 ** 2 + s2 ** 2 - opp ** 2) / (2 * s1 * s2), -1.0, 1.0)
            angles.append(np.arccos(cosine))
        return float(np.min(angles))

    def barycentric(self, tris, points):
        """Barycentric coordinates of ``points`` (m, 2) in triangles ``tris`` (m,)."""
        p = self.coordinates[tris]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        r = np.asarray(points, dtype=float) - p[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        l1 = (r[:, 0] * d2[:, 1] - r[:, 1] * d2[:, 0]) / det
        l2 = (d1[:, 0] * r[:, 1] - d1[:, 1] * r[:, 0]) / det
        return np.stack([1.0 - l1 - l2, l1, l2], axis=1)

    def to_physical(self, tris, bary):
        """Map barycentric points (nq, 3) or (m, nq, 3) to physical points (m, nq, 2)."""
        bary = np.asarray(bary, dtype=float)
        coords = self.coordinates[tris]
        if bary.ndim == 2:
            return np.einsum("qk,mkd->mqd", bary, coords)
        return np.einsum("mqk,mkd->mqd", bary, coords)

    @cached_property
    def _trifinder(self):
        tri = Triangulation(self.vertices[:, 0], self.vertices[:, 1], self.triangles)
        return tri.get_trifinder()

    def locate(self, points):
        """Index of the triangle containing each point, -1 outside the domain."""
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        return np.asarray(self._trifinder(points[:, 0], points[:, 1]), dtype=np.int64)

    def find_vertex(self, point, tol=1e-12):
        """Index of the vertex at ``point`` or None."""
        dist = np.linalg.norm(self.vertices - np.asarray(point, dtype=float), axis=1)
        idx = int(np.argmin(dist))
        if dist[idx] <= tol * max(1.0, self.hmax):
            return idx
        return None

    def edges_on_segment(self, start, end, tol=1e-12):
        """
        Edges lying on the segment from ``start`` to ``end``.

        Raises:
            MeshError: if the edges found do not cover the whole segment.
        """
        start = np.asarray(start, dtype=float)
        end = np.asarray(end, dtype=float)
        direction = end - start
        length = np.linalg.norm(direction)
        if length == 0:
            raise MeshError("line load segment has zero length")
        direction = direction / length
        normal = np.array([direction[1], -direction[0]])
        a = self.vertices[self.edges[:, 0]] - start
        b = self.vertices[self.edges[:, 1]] - start
        scale = tol * max(1.0, length)
        on_line = (np.abs(a @ normal) <= scale) & (np.abs(b @ normal) <= scale)
        ta, tb = a @ direction, b @ direction
        inside = (np.minimum(ta, tb) >= -scale) & (np.maximum(ta, tb) <= length + scale)
        found = np.flatnonzero(on_line & inside)
        if abs(self.edge_lengths[found].sum() - length) > 1e-9 * length:
            raise MeshError("line load segment is not resolved by mesh edges")
        return found


# ---------------------------------------------------------------------- #
# constructors
# ---------------------------------------------------------------------- #
def build_mesh(vertices, triangles, refinement_edge=None):
    """
    Validate and build a mesh.

    Args:
        vertices: (nv, 2) coordinates
        triangles: (nt, 3) vertex indices, counterclockwise
        refinement_edge: optional local refinement-edge index per triangle;
            the longest edge is used otherwise (ties broken by the smallest
            opposite vertex id)

    Returns:
        Mesh
    """
    return Mesh(vertices, triangles, refinement_edge)


def unit_square(triangles=2):
    """The unit square split into 2 triangles (one diagonal) or 4 (criss)."""
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    if triangles == 2:
        return build_mesh(corners, [[0, 1, 2], [0, 2, 3]])
    if triangles == 4:
        vertices = np.vstack([corners, [[0.5, 0.5]]])
        return build_mesh(vertices, [[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]])
    raise MeshError(f"unit square with {triangles} triangles is not available")


def lshape():
    """(-1, 1)² without [0, 1) x (-1, 0], re-entrant corner at the origin."""
    vertices = np.array([
        [-1.0, -1.0], [0.0, -1.0], [-1.0, 0.0], [0.0, 0.0],
        [1.0, 0.0], [-1.0, 1.0], [0.0, 1.0], [1.0, 1.0],
    ])
    triangles = [[0, 1, 3], [0, 3, 2], [2, 3, 6], [2, 6, 5], [3, 4, 7], [3, 7, 6]]
    return build_mesh(vertices, triangles)


def read_mesh_file(path):
    """
    Read a mesh from a text file.

    The first line holds ``nv nt``; it is followed by ``nv`` lines ``x y``
    and ``nt`` lines ``i j k`` of zero-based vertex indices. Blank lines
    and text after ``#`` are ignored.
    """
    if not os.path.exists(path):
        raise MeshError(f"mesh file not found: {path}")
    with open(path, encoding="utf-8") as handle:
        lines = [(number, raw.split("#", 1)[0].split()) for number, raw in enumerate(handle, start=1)]
    lines = [(number, parts) for number, parts in lines if parts]
    if not lines:
        raise MeshError(f"{path}: empty mesh file")

    def parse(entry, width, kind):
        number, parts = entry
        try:
            if len(parts) != width:
                raise ValueError(parts)
            return [kind(p) for p in parts]
        except ValueError as exc:
            raise MeshError(f"{path}:{number}: cannot parse '{' '.join(parts)}'") from exc

    nv, nt = parse(lines[0], 2, int)
    if nv < 3 or nt < 1:
        raise MeshError(f"{path}:{lines[0][0]}: need at least 3 vertices and 1 triangle, got {nv} {nt}")
    body = lines[1:]
    if len(body) != nv + nt:
        raise MeshError(f"{path}: header announces {nv + nt} records, found {len(body)}")
    vertices = [parse(entry, 2, float) for entry in body[:nv]]
    triangles = [parse(entry, 3, int) for entry in body[nv:]]
    return build_mesh(np.array(vertices), np.array(triangles))


# ---------------------------------------------------------------------- #
# refinement
# ---------------------------------------------------------------------- #
def refine_uniform(mesh):
    """Red refinement: every triangle is split into four similar children."""
    nv = mesh.num_vertices
    vertices = np.vstack([mesh.vertices, mesh.midpoints])
    tri = mesh.triangles
    mid = nv + mesh.triangle_edges  # mid[:, i] is the midpoint of local edge i
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    ma, mb, mc = mid[:, 0], mid[:, 1], mid[:, 2]
    children = np.stack([
        np.stack([a, mc, mb], axis=1),
        np.stack([mc, b, ma], axis=1),
        np.stack([mb, ma, c], axis=1),
        np.stack([ma, mb, mc], axis=1),
    ], axis=1).reshape(-1, 3)
    refined = build_mesh(vertices, children)
    logger.debug("uniform refinement: %d -> %d triangles", mesh.num_triangles, refined.num_triangles)
    return refined


def refine_bisect(mesh, marked):
    """
    Newest-vertex bisection with closure.

    Every marked triangle is bisected at least once; the refinement edges of
    neighbours are bisected as needed to keep the mesh conforming. Children
    are stored with their newest vertex first, so their refinement edge is
    local edge 0.
    """
    marked = np.unique(np.asarray(marked, dtype=np.int64))
    if marked.size == 0:
        return mesh
    if marked.min() < 0 or marked.max() >= mesh.num_triangles:
        raise RefinementError("marked triangle id out of range")

    nt = mesh.num_triangles
    ref_edges = mesh.triangle_edges[np.arange(nt), mesh.refinement_edge]
    bisect_edge = np.zeros(mesh.num_edges, dtype=bool)
    bisect_edge[ref_edges[marked]] = True
    for _ in range(mesh.num_edges + 1):
        touched = bisect_edge[mesh.triangle_edges].any(axis=1)
        missing = touched & ~bisect_edge[ref_edges]
        if not missing.any():
            break
        bisect_edge[ref_edges[missing]] = True
    else:
        raise RefinementError("closure did not terminate")

    split = np.flatnonzero(bisect_edge)
    new_ids = np.full(mesh.num_edges, -1)
    new_ids[split] = mesh.num_vertices + np.arange(len(split))
    vertices = np.vstack([mesh.vertices, mesh.midpoints[split]])
    edge_id = {(int(min(p)), int(max(p))): i for i, p in enumerate(mesh.edges)}

    def midpoint_of(u, v):
        e = edge_id.get((min(u, v), max(u, v)))
        if e is None or new_ids[e] < 0:
            return None
        return int(new_ids[e])

    def bisect(z0, z1, z2, out):
        m = midpoint_of(z1, z2)
        if m is None:
            out.append((z0, z1, z2))
            return
        bisect(m, z0, z1, out)
        bisect(m, z2, z0, out)

    children = []
    for t in range(nt):
        r = mesh.refinement_edge[t]
        z = mesh.triangles[t]
        bisect(int(z[r]), int(z[(r + 1) % 3]), int(z[(r + 2) % 3]), children)

    children = np.array(children, dtype=np.int64)
    refined = build_mesh(vertices, children, refinement_edge=np.zeros(len(children), dtype=np.int64))
    logger.info("bisection: %d marked, %d -> %d triangles", len(marked), nt, refined.num_triangles)
    return refined
