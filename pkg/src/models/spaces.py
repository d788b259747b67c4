"""
Discrete spaces, dof maps and discrete fields.

Spaces over a mesh:

* ``morley``: Morley element, dofs at interior vertices and interior edges
* ``dg``: discontinuous P2, six dofs per triangle
* ``c0ip``: continuous P2 vanishing on the boundary (S²₀)
* ``hct``: HCT macro element in H²₀, three dofs per interior vertex and one per interior edge
* ``cr``: Crouzeix-Raviart P1 vanishing at boundary edge midpoints
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from src.models.basisquad import ElementBasis, DofDescriptor, quad_edge, local_descriptors
from src.models.errors import SpaceError

logger = logging.getLogger(__name__)

SPACE_KINDS = {"morley": "Morley", "dg": "P2", "c0ip": "P2", "hct": "HCT", "cr": "CR"}


class DofMap:
    """
    Global numbering of the dofs of one space on one mesh.

    Attributes:
        cell_dofs: (nt, nloc) global index of each local dof, -1 where the dof
            is fixed to zero by the boundary condition
        descriptors: one DofDescriptor per global dof
    """

    def __init__(self, mesh, space):
        if space not in SPACE_KINDS:
            raise SpaceError(f"unknown space '{space}'")
        self.mesh = mesh
        self.space = space
        self.kind = SPACE_KINDS[space]
        normals = mesh.normals[mesh.triangle_edges]
        self.basis = ElementBasis(self.kind, mesh.coordinates, normals)
        self.cell_dofs, self.descriptors = self._number()
        self.ndof = len(self.descriptors)
        logger.debug("%s space on %r: %d dofs", space, mesh, self.ndof)

    def __repr__(self):
        return f"DofMap({self.space}, ndof={self.ndof})"

    @property
    def nloc(self):
        return self.basis.nloc

    def _number(self):
        mesh = self.mesh
        nt = mesh.num_triangles
        vertex_ids = np.full(mesh.num_vertices, -1)
        inner_vertices = mesh.interior_vertices
        edge_ids = np.full(mesh.num_edges, -1)
        inner_edges = np.flatnonzero(mesh.interior_edges)

        if self.space == "dg":
            cell = np.arange(6 * nt).reshape(nt, 6)
            desc = [DofDescriptor(d.kind, t, d.local) for t in range(nt) for d in local_descriptors("P2")]
            return cell, desc

        if self.space == "cr":
            edge_ids[inner_edges] = np.arange(len(inner_edges))
            cell = edge_ids[mesh.triangle_edges]
            return cell, [DofDescriptor("edge_mean", int(e)) for e in inner_edges]

        if self.space == "hct":
            vertex_ids[inner_vertices] = np.arange(len(inner_vertices))
            edge_ids[inner_edges] = 3 * len(inner_vertices) + np.arange(len(inner_edges))
            vid = vertex_ids[mesh.triangles]
            cell = np.empty((nt, 12), dtype=np.int64)
            for k in range(3):
                for c in range(3):
                    cell[:, 3 * k + c] = np.where(vid[:, k] >= 0, 3 * vid[:, k] + c, -1)
            cell[:, 9:] = edge_ids[mesh.triangle_edges]
            desc = []
            for z in inner_vertices:
                desc += [DofDescriptor("vertex_value", int(z)), DofDescriptor("vertex_dx", int(z)),
                         DofDescriptor("vertex_dy", int(z))]
            desc += [DofDescriptor("edge_midpoint_normal", int(e)) for e in inner_edges]
            return cell, desc

        vertex_ids[inner_vertices] = np.arange(len(inner_vertices))
        edge_ids[inner_edges] = len(inner_vertices) + np.arange(len(inner_edges))
        cell = np.concatenate([vertex_ids[mesh.triangles], edge_ids[mesh.triangle_edges]], axis=1)
        edge_kind = "edge_normal_mean" if self.space == "morley" else "edge_midpoint_value"
        desc = ([DofDescriptor("vertex_value", int(z)) for z in inner_vertices]
                + [DofDescriptor(edge_kind, int(e)) for e in inner_edges])
        return cell, desc

    def vertex_dof(self, z, component=0):
        """Global index of the vertex dof at ``z`` (-1 on the boundary)."""
        mesh = self.mesh
        tri = mesh.vertex_patch(z)[0]
        k = int(np.flatnonzero(mesh.triangles[tri] == z)[0])
        if self.space == "hct":
            return int(self.cell_dofs[tri, 3 * k + component])
        return int(self.cell_dofs[tri, k])

    def edge_dof(self, e):
        """Global index of the dof attached to edge ``e`` (-1 on the boundary)."""
        tri, local = self.mesh.edge_triangles[e, 0], self.mesh.edge_local[e, 0]
        offset = {"hct": 9, "cr": 0}.get(self.space, 3)
        return int(self.cell_dofs[tri, offset + local])

    def scatter_matrix(self, local, rows_dofs, cols_dofs):
        """Assemble local blocks (n, r, c) into a sparse matrix, dropping constrained dofs."""
        rows = np.broadcast_to(rows_dofs[:, :, None], local.shape)
        cols = np.broadcast_to(cols_dofs[:, None, :], local.shape)
        keep = (rows >= 0) & (cols >= 0)
        return sparse.coo_matrix((local[keep], (rows[keep], cols[keep])), shape=(self.ndof, self.ndof)).tocsr()

    def scatter_vector(self, local, dofs=None):
        """Sum local vectors (nt, nloc) into a global vector."""
        dofs = self.cell_dofs if dofs is None else dofs
        keep = dofs >= 0
        out = np.zeros(self.ndof)
        np.add.at(out, dofs[keep], local[keep])
        return out


def build_space(mesh, space):
    """DofMap of ``space`` on ``mesh``; cached per mesh."""
    spaces = mesh.cache.setdefault("spaces", {})
    if space not in spaces:
        spaces[space] = DofMap(mesh, space)
    return spaces[space]


def dofmap(mesh, scheme):
    """DofMap for a scheme name or space name."""
    space = {"dg1": "dg", "dg2": "dg", "wopsip": "dg"}.get(scheme, scheme)
    return build_space(mesh, space)


# ---------------------------------------------------------------------- #
# fields
# ---------------------------------------------------------------------- #
@dataclass(eq=False)
class DiscreteField:
    """Coefficient vector of a space, evaluable elementwise up to second derivatives."""

    dofmap: DofMap
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape != (self.dofmap.ndof,):
            raise SpaceError(f"expected {self.dofmap.ndof} coefficients, got {self.coefficients.shape}")

    @property
    def mesh(self):
        return self.dofmap.mesh

    @property
    def space(self):
        return self.dofmap.space

    def local_coefficients(self, tris=None):
        cell = self.dofmap.cell_dofs if tris is None else self.dofmap.cell_dofs[tris]
        return np.where(cell >= 0, self.coefficients[np.maximum(cell, 0)], 0.0)

    def evaluate(self, tris, bary, sub=None):
        """Values (m, nq), gradients (m, nq, 2), Hessians (m, nq, 2, 2) in triangles ``tris``."""
        tris = np.asarray(tris, dtype=np.int64)
        v, g, h = self.dofmap.basis.evaluate(tris, bary, sub)
        c = self.local_coefficients(tris)
        return (np.einsum("mqn,mn->mq", v, c), np.einsum("mqnd,mn->mqd", g, c),
                np.einsum("mqnde,mn->mqde", h, c))

    def eval(self, tri, point):
        """Value, gradient and Hessian of the restriction to triangle ``tri`` at a physical point."""
        bary = self.mesh.barycentric(np.array([tri]), np.asarray(point, dtype=float)[None])
        v, g, h = self.evaluate(np.array([tri]), bary[None])
        return float(v[0, 0]), g[0, 0], h[0, 0]

    def __add__(self, other):
        _check_same(self, other)
        return DiscreteField(self.dofmap, self.coefficients + other.coefficients)

    def __sub__(self, other):
        _check_same(self, other)
        return DiscreteField(self.dofmap, self.coefficients - other.coefficients)

    def __mul__(self, scalar):
        return DiscreteField(self.dofmap, scalar * self.coefficients)

    __rmul__ = __mul__


def _check_same(a, b):
    if a.dofmap is not b.dofmap:
        raise SpaceError("fields live in different spaces")


def zero_field(dm):
    return DiscreteField(dm, np.zeros(dm.ndof))


class ClosedForm:
    """
    Smooth function given by closed-form value, gradient and Hessian.

    The callables take coordinate arrays ``x, y`` of equal shape and return
    arrays of that shape (value), shape + (2,) (gradient) and shape + (2, 2)
    (Hessian).
    """

    def __init__(self, value, gradient, hessian):
        self.value = value
        self.gradient = gradient
        self.hessian = hessian

    def evaluate_on(self, mesh, tris, bary, sub=None):
        xy = mesh.to_physical(np.asarray(tris, dtype=np.int64), bary)
        x, y = xy[..., 0], xy[..., 1]
        return self.value(x, y), self.gradient(x, y), self.hessian(x, y)


def evaluate_piecewise(source, mesh, tris, bary, sub=None):
    """Evaluate a DiscreteField or ClosedForm on triangles of ``mesh``."""
    if isinstance(source, DiscreteField):
        if source.mesh is not mesh:
            raise SpaceError("field is defined on a different mesh")
        return source.evaluate(tris, bary, sub)
    return source.evaluate_on(mesh, tris, bary, sub)


# ---------------------------------------------------------------------- #
# edge traces and jumps
# ---------------------------------------------------------------------- #
def edge_barycentric(mesh, t):
    """
    Barycentric coordinates of the edge points A + t (B - A) seen from both sides.

    Returns:
        tuple: (plus (ne, nq, 3), minus (ne, nq, 3)); minus rows of boundary
        edges are zero-filled placeholders
    """
    t = np.asarray(t, dtype=float)
    ne, nq = mesh.num_edges, len(t)
    plus = np.zeros((ne, nq, 3))
    minus = np.zeros((ne, nq, 3))
    rows = np.arange(ne)
    i = mesh.edge_local[:, 0]
    plus[rows, :, (i + 1) % 3] = 1.0 - t
    plus[rows, :, (i + 2) % 3] = t
    j = mesh.edge_local[:, 1]
    inner = np.flatnonzero(j >= 0)
    minus[inner, :, (j[inner] + 1) % 3] = t
    minus[inner, :, (j[inner] + 2) % 3] = 1.0 - t
    return plus, minus


@dataclass
class EdgeTraces:
    """One-sided traces of a piecewise function on every edge at parameters ``t``."""

    t: np.ndarray
    plus: tuple
    minus: tuple
    interior: np.ndarray

    def jump(self, order=0):
        p, m = self.plus[order], self.minus[order]
        return p - np.where(_expand(self.interior, p), m, 0.0)

    def average(self, order=0):
        p, m = self.plus[order], self.minus[order]
        return np.where(_expand(self.interior, p), 0.5 * (p + m), p)


def _expand(mask, like):
    return mask.reshape((-1,) + (1,) * (like.ndim - 1))


def edge_traces(source, t, mesh=None):
    """
    Values, gradients and Hessians of ``source`` on both sides of every edge.

    Points on edge E lie in sub-triangle ``local edge index`` for HCT fields.
    """
    mesh = source.mesh if mesh is None else mesh
    plus_bary, minus_bary = edge_barycentric(mesh, t)
    tp = mesh.edge_triangles[:, 0]
    plus = evaluate_piecewise(source, mesh, tp, plus_bary, mesh.edge_local[:, 0][:, None])
    inner = np.flatnonzero(mesh.interior_edges)
    minus = tuple(np.zeros_like(a) for a in plus)
    if len(inner):
        tm = mesh.edge_triangles[inner, 1]
        values = evaluate_piecewise(source, mesh, tm, minus_bary[inner], mesh.edge_local[inner, 1][:, None])
        for full, part in zip(minus, values):
            full[inner] = part
    return EdgeTraces(np.asarray(t, dtype=float), plus, minus, mesh.interior_edges.copy())


def edge_jumps(source, edge, rule=None, mesh=None):
    """
    Jumps and averages of value, gradient and Hessian on one edge.

    Returns:
        dict: keys "jump" and "average", each a tuple (value, gradient, Hessian)
        of arrays over the rule's points
    """
    rule = quad_edge(4) if rule is None else rule
    traces = edge_traces(source, rule.points, mesh)
    return {
        "jump": tuple(traces.jump(k)[edge] for k in range(3)),
        "average": tuple(traces.average(k)[edge] for k in range(3)),
    }


def jh_functionals(source, mesh=None):
    """
    The three scaled edge functionals whose products make up j_h.

    Returns:
        (ne, 3) array: [v](A)/h_E, [v](B)/h_E and the edge mean of [∂v/∂ν_E]
    """
    mesh = source.mesh if mesh is None else mesh
    ends = edge_traces(source, np.array([0.0, 1.0]), mesh).jump(0)
    rule = quad_edge(4)
    grad = edge_traces(source, rule.points, mesh).jump(1)
    normal_mean = np.einsum("eqd,ed,q->e", grad, mesh.normals, rule.weights)
    h = mesh.edge_lengths
    return np.stack([ends[:, 0] / h, ends[:, 1] / h, normal_mean], axis=1)


def jh_edge_terms(v, w=None, mesh=None):
    """Per-edge contributions to j_h(v, w)."""
    fv = jh_functionals(v, mesh)
    fw = fv if w is None else jh_functionals(w, mesh)
    return np.einsum("ek,ek->e", fv, fw)


def jh_product(v, w=None, mesh=None):
    """The jump semi-scalar product j_h(v, w) summed over all edges."""
    return float(jh_edge_terms(v, w, mesh).sum())


# ---------------------------------------------------------------------- #
# shape traces used by assembly and transfer
# ---------------------------------------------------------------------- #
@dataclass
class EdgeShapeTraces:
    """
    Traces of the local shapes of both adjacent triangles at edge points.

    Arrays are stacked as (ne, nq, 2 * nloc, ...) with plus-side shapes first;
    minus-side shapes of boundary edges are zero and their dofs are -1.
    """

    values: np.ndarray
    grads: np.ndarray
    hessians: np.ndarray
    dofs: np.ndarray
    side_weight: np.ndarray

    @property
    def signed(self):
        """Sign of each shape in a jump: +1 plus side, -1 minus side."""
        n = self.dofs.shape[1] // 2
        return np.concatenate([np.ones(n), -np.ones(n)])


def edge_shape_traces(dm, t):
    mesh = dm.mesh
    ne, nloc = mesh.num_edges, dm.nloc
    plus_bary, minus_bary = edge_barycentric(mesh, t)
    nq = len(t)
    values = np.zeros((ne, nq, 2 * nloc))
    grads = np.zeros((ne, nq, 2 * nloc, 2))
    hess = np.zeros((ne, nq, 2 * nloc, 2, 2))
    dofs = np.full((ne, 2 * nloc), -1, dtype=np.int64)
    tp = mesh.edge_triangles[:, 0]
    v, g, h = dm.basis.evaluate(tp, plus_bary, mesh.edge_local[:, 0][:, None])
    values[:, :, :nloc], grads[:, :, :nloc], hess[:, :, :nloc] = v, g, h
    dofs[:, :nloc] = dm.cell_dofs[tp]
    inner = np.flatnonzero(mesh.interior_edges)
    if len(inner):
        tm = mesh.edge_triangles[inner, 1]
        v, g, h = dm.basis.evaluate(tm, minus_bary[inner], mesh.edge_local[inner, 1][:, None])
        values[inner, :, nloc:], grads[inner, :, nloc:], hess[inner, :, nloc:] = v, g, h
        dofs[inner, nloc:] = dm.cell_dofs[tm]
    side_weight = np.zeros((ne, 2 * nloc))
    side_weight[:, :nloc] = np.where(mesh.interior_edges, 0.5, 1.0)[:, None]
    side_weight[inner, nloc:] = 0.5
    return EdgeShapeTraces(values, grads, hess, dofs, side_weight)


def jh_matrix_rows(dm):
    """
    Sparse (3 ne, ndof) matrix B with B @ coefficients = jh_functionals(field).
    """
    mesh = dm.mesh
    ends = edge_shape_traces(dm, np.array([0.0, 1.0]))
    rule = quad_edge(4)
    tr = edge_shape_traces(dm, rule.points)
    sign = ends.signed
    h = mesh.edge_lengths
    row_a = ends.values[:, 0] * sign / h[:, None]
    row_b = ends.values[:, 1] * sign / h[:, None]
    row_n = np.einsum("eqnd,ed,q->en", tr.grads, mesh.normals, rule.weights) * sign
    local = np.stack([row_a, row_b, row_n], axis=1)  # (ne, 3, 2 nloc)
    ne = mesh.num_edges
    rows = np.broadcast_to((3 * np.arange(ne)[:, None] + np.arange(3))[:, :, None], local.shape)
    cols = np.broadcast_to(ends.dofs[:, None, :], local.shape)
    keep = cols >= 0
    return sparse.coo_matrix((local[keep], (rows[keep], cols[keep])), shape=(3 * ne, dm.ndof)).tocsr()
