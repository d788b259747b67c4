"""
Quadrature rules and local shape functions.

Local shapes are represented by coefficient matrices over scaled monomials
ξ = (x - c_T) / h_T, η = (y - c_T) / h_T, so that values, gradients and
Hessians are polynomial evaluations followed by a chain-rule scaling.
The HCT element is stored the same way with one coefficient block per
sub-triangle of the centroid split.
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_jacobi

from src.models.errors import QuadratureError, SpaceError

logger = logging.getLogger(__name__)

KINDS = ("P2", "Morley", "HCT", "CR")
LOCAL_DOFS = {"P2": 6, "Morley": 6, "HCT": 12, "CR": 3}
MAX_TRIANGLE_DEGREE = 10
MAX_EDGE_DEGREE = 9

# Lagrange nodes of P2 in barycentric coordinates: vertices, then midpoints of local edges 0, 1, 2
P2_NODES = np.array([
    [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0],
    [0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0],
])


@dataclass(frozen=True)
class QuadratureRule:
    """
    Quadrature rule on the reference triangle or the unit interval.

    Triangle rules hold barycentric points (n, 3) and weights summing to 1/2,
    so ∫_T f ≈ 2|T| Σ w_q f(x_q). Edge rules hold parameters t in [0, 1] and
    weights summing to 1, so ∫_E f ≈ h_E Σ w_q f(A + t_q (B - A)).
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int
    sub: np.ndarray = field(default=None)


@lru_cache(maxsize=None)
def quad_triangle(degree):
    """
    Symmetric quadrature rule on the reference triangle, exact to ``degree``.

    Degrees 1 and 2 use the centroid and edge-midpoint rules; higher degrees
    use a conical Gauss-Jacobi x Gauss-Legendre product symmetrized over the
    six vertex permutations.
    """
    if not 1 <= degree <= MAX_TRIANGLE_DEGREE:
        raise QuadratureError(f"triangle quadrature degree {degree} not in 1..{MAX_TRIANGLE_DEGREE}")
    if degree == 1:
        return QuadratureRule(np.array([[1.0, 1.0, 1.0]]) / 3.0, np.array([0.5]), 1)
    if degree == 2:
        return QuadratureRule(P2_NODES[3:].copy(), np.full(3, 1.0 / 6.0), 2)

    n = (degree + 2) // 2
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    u = 0.5 * (xj + 1.0)
    wu = 0.25 * wj
    xl, wl = leggauss(n)
    v = 0.5 * (xl + 1.0)
    wv = 0.5 * wl
    uu, vv = np.meshgrid(u, v, indexing="ij")
    ww = np.outer(wu, wv)
    x = uu.ravel()
    y = (vv * (1.0 - uu)).ravel()
    base = np.stack([1.0 - x - y, x, y], axis=1)
    weights = ww.ravel()
    perms = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
    points = np.vstack([base[:, p] for p in perms])
    weights = np.tile(weights, len(perms)) / len(perms)
    return QuadratureRule(points, weights, degree)


@lru_cache(maxsize=None)
def quad_edge(degree):
    """Gauss-Legendre rule on [0, 1] exact to ``degree``."""
    if not 0 <= degree <= MAX_EDGE_DEGREE:
        raise QuadratureError(f"edge quadrature degree {degree} not in 0..{MAX_EDGE_DEGREE}")
    n = degree // 2 + 1
    x, w = leggauss(n)
    return QuadratureRule(0.5 * (x + 1.0), 0.5 * w, degree)


@lru_cache(maxsize=None)
def quad_macro(degree):
    """
    Composite rule on the centroid split of the reference triangle.

    Sub-triangle i is spanned by local vertices i+1, i+2 and the centroid;
    ``sub`` records which piece each point belongs to.
    """
    rule = quad_triangle(degree)
    centroid = np.full(3, 1.0 / 3.0)
    points, weights, subs = [], [], []
    for i in range(3):
        corners = np.zeros((3, 3))
        corners[0, (i + 1) % 3] = 1.0
        corners[1, (i + 2) % 3] = 1.0
        corners[2] = centroid
        points.append(rule.points @ corners)
        weights.append(rule.weights / 3.0)
        subs.append(np.full(len(rule.weights), i))
    return QuadratureRule(np.vstack(points), np.concatenate(weights), degree, np.concatenate(subs))


# ---------------------------------------------------------------------- #
# monomials
# ---------------------------------------------------------------------- #
@lru_cache(maxsize=None)
def monomial_exponents(degree):
    """Exponents (a, b) of ξ^a η^b ordered by total degree, then by b."""
    return np.array([(d - b, b) for d in range(degree + 1) for b in range(d + 1)], dtype=np.int64)


def _power(x, k):
    return np.where(k >= 0, x[..., None] ** np.maximum(k, 0), 0.0)


def evaluate_monomials(xi, eta, degree):
    """
    Values, first and second derivatives of the scaled monomials.

    Returns:
        tuple: arrays of shape (..., nm), (..., nm, 2) and (..., nm, 2, 2)
    """
    exps = monomial_exponents(degree)
    a, b = exps[:, 0], exps[:, 1]
    xa = [_power(xi, a - s) for s in range(3)]
    eb = [_power(eta, b - s) for s in range(3)]
    values = xa[0] * eb[0]
    grad = np.stack([a * xa[1] * eb[0], b * xa[0] * eb[1]], axis=-1)
    dxx = a * (a - 1) * xa[2] * eb[0]
    dxy = a * b * xa[1] * eb[1]
    dyy = b * (b - 1) * xa[0] * eb[2]
    hess = np.stack([np.stack([dxx, dxy], axis=-1), np.stack([dxy, dyy], axis=-1)], axis=-2)
    return values, grad, hess


# ---------------------------------------------------------------------- #
# element bases
# ---------------------------------------------------------------------- #
@dataclass
class DofDescriptor:
    """What a local or global degree of freedom measures."""

    kind: str
    entity: int
    local: int = 0


class ElementBasis:
    """
    Local shape functions of one element kind on every triangle of a mesh.

    Attributes:
        kind: one of "P2", "Morley", "HCT", "CR"
        coefficients: (nt, nsub, nm, nloc) monomial coefficients
    """

    def __init__(self, kind, coordinates, normals=None):
        if kind not in KINDS:
            raise SpaceError(f"unknown element kind '{kind}'")
        self.kind = kind
        self.coordinates = np.asarray(coordinates, dtype=float)
        self.centers = self.coordinates.mean(axis=1)
        edge_vectors = self.coordinates[:, [2, 0, 1]] - self.coordinates[:, [1, 2, 0]]
        self.scales = np.linalg.norm(edge_vectors, axis=2).max(axis=1)
        if normals is None:
            lengths = np.linalg.norm(edge_vectors, axis=2)
            normals = np.stack([edge_vectors[..., 1], -edge_vectors[..., 0]], axis=-1) / lengths[..., None]
        self.normals = np.asarray(normals, dtype=float)
        self.degree = 3 if kind == "HCT" else (1 if kind == "CR" else 2)
        self.nloc = LOCAL_DOFS[kind]
        if kind == "HCT":
            self.coefficients = self._hct_coefficients()
        else:
            self.coefficients = self._nodal_coefficients()[:, None]

    @property
    def num_sub(self):
        return self.coefficients.shape[1]

    def _local(self, xy, tris=None):
        centers = self.centers if tris is None else self.centers[tris]
        scales = self.scales if tris is None else self.scales[tris]
        rel = (xy - centers[:, None, :]) / scales[:, None, None]
        return rel[..., 0], rel[..., 1]

    def _nodal_coefficients(self):
        nt = len(self.coordinates)
        if self.kind == "CR":
            mids = np.einsum("qk,tkd->tqd", P2_NODES[3:], self.coordinates)
            xi, eta = self._local(mids)
            values, _, _ = evaluate_monomials(xi, eta, 1)
            dof_matrix = values
        else:
            nodes = np.einsum("qk,tkd->tqd", P2_NODES, self.coordinates)
            xi, eta = self._local(nodes)
            values, grad, _ = evaluate_monomials(xi, eta, 2)
            dof_matrix = values.copy()
            if self.kind == "Morley":
                grad = grad / self.scales[:, None, None, None]
                dof_matrix[:, 3:] = np.einsum("tqmd,tqd->tqm", grad[:, 3:], self.normals)
        coefficients = np.linalg.inv(dof_matrix)
        logger.debug("built %s basis on %d triangles", self.kind, nt)
        return coefficients

    def _hct_coefficients(self):
        nt = len(self.coordinates)
        nm = 10
        p = self.coordinates
        c = self.centers

        def block(points, sub, order):
            xi, eta = self._local(points)
            values, grad, _ = evaluate_monomials(xi, eta, 3)
            grad = grad / self.scales[:, None, None, None]
            row = np.zeros(values.shape[:2] + (3 * nm,) + ((2,) if order else ()))
            if order:
                row[:, :, sub * nm:(sub + 1) * nm] = grad
            else:
                row[:, :, sub * nm:(sub + 1) * nm] = values
            return row

        # C¹ continuity across the three interior segments c -> v_j shared by pieces j+1 and j+2
        rows = []
        for j in range(3):
            left, right = (j + 1) % 3, (j + 2) % 3
            seg = p[:, j] - c
            normal = np.stack([seg[:, 1], -seg[:, 0]], axis=1)
            normal /= np.linalg.norm(normal, axis=1)[:, None]
            t_val = np.array([0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0])
            pts = c[:, None, :] + t_val[None, :, None] * seg[:, None, :]
            rows.append(block(pts, left, 0) - block(pts, right, 0))
            t_der = np.array([0.0, 0.5, 1.0])
            pts = c[:, None, :] + t_der[None, :, None] * seg[:, None, :]
            diff = block(pts, left, 1) - block(pts, right, 1)
            rows.append(np.einsum("tqmd,td->tqm", diff, normal))
        constraints = np.concatenate(rows, axis=1)
        _, singular, vh = np.linalg.svd(constraints)
        if (singular[:, 18] > 1e-9 * singular[:, 0]).any() or (singular[:, 17] < 1e-9 * singular[:, 0]).any():
            raise SpaceError("HCT continuity constraints have unexpected rank")
        null = np.transpose(vh[:, 18:, :], (0, 2, 1))

        # dofs: (value, d/dx, d/dy) at each vertex, then normal derivative at each edge midpoint
        dofs = np.zeros((nt, 12, 3 * nm))
        for k in range(3):
            sub = (k + 1) % 3
            pts = p[:, k][:, None, :]
            dofs[:, 3 * k] = block(pts, sub, 0)[:, 0]
            g = block(pts, sub, 1)[:, 0]
            dofs[:, 3 * k + 1] = g[..., 0]
            dofs[:, 3 * k + 2] = g[..., 1]
        for i in range(3):
            mid = 0.5 * (p[:, (i + 1) % 3] + p[:, (i + 2) % 3])
            g = block(mid[:, None, :], i, 1)[:, 0]
            dofs[:, 9 + i] = np.einsum("tmd,td->tm", g, self.normals[:, i])
        coefficients = null @ np.linalg.inv(dofs @ null)
        logger.debug("built HCT basis on %d triangles", nt)
        return coefficients.reshape(nt, 3, nm, 12)

    def locate_sub(self, bary):
        """Sub-triangle of the centroid split containing each barycentric point."""
        if self.num_sub == 1:
            return np.zeros(np.shape(bary)[:-1], dtype=np.int64)
        return np.argmin(bary, axis=-1)

    def _block(self, tris, xy, sub):
        xi, eta = self._local(xy, tris)
        values, grad, hess = evaluate_monomials(xi, eta, self.degree)
        coef = self.coefficients[tris, sub]
        scale = self.scales[tris]
        v = np.einsum("mqk,mkn->mqn", values, coef)
        g = np.einsum("mqkd,mkn->mqnd", grad, coef) / scale[:, None, None, None]
        h = np.einsum("mqkde,mkn->mqnde", hess, coef) / scale[:, None, None, None, None] ** 2
        return v, g, h

    def evaluate(self, tris, bary, sub=None):
        """
        Evaluate all local shapes of triangles ``tris`` at barycentric points.

        Args:
            tris: (m,) triangle indices
            bary: (nq, 3) points shared by all triangles or (m, nq, 3) per triangle
            sub: optional sub-triangle hint for HCT, broadcastable to (m, nq)

        Returns:
            tuple: values (m, nq, nloc), gradients (m, nq, nloc, 2),
            Hessians (m, nq, nloc, 2, 2)
        """
        tris = np.asarray(tris, dtype=np.int64)
        bary = np.asarray(bary, dtype=float)
        m = len(tris)
        if bary.ndim == 2:
            bary = np.broadcast_to(bary, (m,) + bary.shape)
        nq = bary.shape[1]
        xy = np.einsum("mqk,mkd->mqd", bary, self.coordinates[tris])
        if sub is None or self.num_sub == 1:
            sub = self.locate_sub(bary)
        sub = np.broadcast_to(np.asarray(sub, dtype=np.int64), (m, nq))

        values = np.zeros((m, nq, self.nloc))
        grads = np.zeros((m, nq, self.nloc, 2))
        hessians = np.zeros((m, nq, self.nloc, 2, 2))
        for s in range(self.num_sub):
            mask = sub == s
            if not mask.any():
                continue
            if mask.all():
                values[:], grads[:], hessians[:] = self._block(tris, xy, s)
            elif (mask == mask[:1]).all():
                cols = np.flatnonzero(mask[0])
                v, g, h = self._block(tris, xy[:, cols], s)
                values[:, cols], grads[:, cols], hessians[:, cols] = v, g, h
            elif (mask == mask[:, :1]).all():
                rows = np.flatnonzero(mask[:, 0])
                v, g, h = self._block(tris[rows], xy[rows], s)
                values[rows], grads[rows], hessians[rows] = v, g, h
            else:
                r, q = np.nonzero(mask)
                v, g, h = self._block(tris[r], xy[r, q][:, None, :], s)
                values[r, q], grads[r, q], hessians[r, q] = v[:, 0], g[:, 0], h[:, 0]
        return values, grads, hessians


class ShapeSet:
    """Local shapes of a single triangle together with their dof descriptors."""

    def __init__(self, kind, coordinates, normals=None):
        coordinates = np.asarray(coordinates, dtype=float)[None]
        if normals is not None:
            normals = np.asarray(normals, dtype=float)[None]
        self.basis = ElementBasis(kind, coordinates, normals)
        self.kind = kind
        self.dofs = local_descriptors(kind)

    def __len__(self):
        return self.basis.nloc

    def evaluate(self, points):
        """Values (n, nloc), gradients (n, nloc, 2) and Hessians (n, nloc, 2, 2) at physical points."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        bary = _barycentric_single(self.basis.coordinates[0], points)
        v, g, h = self.basis.evaluate(np.array([0]), bary)
        return v[0], g[0], h[0]


def _barycentric_single(coords, points):
    d1 = coords[1] - coords[0]
    d2 = coords[2] - coords[0]
    det = d1[0] * d2[1] - d1[1] * d2[0]
    r = points - coords[0]
    l1 = (r[:, 0] * d2[1] - r[:, 1] * d2[0]) / det
    l2 = (d1[0] * r[:, 1] - d1[1] * r[:, 0]) / det
    return np.stack([1.0 - l1 - l2, l1, l2], axis=1)


def local_descriptors(kind):
    """Dof descriptors of one element, in local order."""
    if kind == "P2":
        return ([DofDescriptor("vertex_value", k, k) for k in range(3)]
                + [DofDescriptor("edge_midpoint_value", i, 3 + i) for i in range(3)])
    if kind == "Morley":
        return ([DofDescriptor("vertex_value", k, k) for k in range(3)]
                + [DofDescriptor("edge_normal_mean", i, 3 + i) for i in range(3)])
    if kind == "CR":
        return [DofDescriptor("edge_mean", i, i) for i in range(3)]
    if kind == "HCT":
        out = []
        for k in range(3):
            out += [DofDescriptor("vertex_value", k, 3 * k),
                    DofDescriptor("vertex_dx", k, 3 * k + 1),
                    DofDescriptor("vertex_dy", k, 3 * k + 2)]
        return out + [DofDescriptor("edge_midpoint_normal", i, 9 + i) for i in range(3)]
    raise SpaceError(f"unknown element kind '{kind}'")


def shapes(kind, coordinates, normals=None):
    """
    Local shape functions of ``kind`` on one triangle.

    Args:
        kind: "P2", "Morley", "HCT" or "CR"
        coordinates: (3, 2) counterclockwise vertex coordinates
        normals: optional (3, 2) unit normals used by normal-derivative dofs;
            outward normals by default

    Returns:
        ShapeSet
    """
    return ShapeSet(kind, coordinates, normals)
