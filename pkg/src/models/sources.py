"""
General plate loads and their piecewise-polynomial approximations.

A load is the functional

    F(v) = Σ_{|α|≤2} (f_α, ∂^α v) + Σ_{j=0,1} (g_j, ∂^j v/∂ν^j)_{Γ_j} + Σ_z β_z v(z)

with volume densities f_α, line loads g_j on polygonal segments and point
loads β_z at interior vertices. Densities are vectorized callables
``f(x, y)`` or ``PiecewisePolynomial`` instances.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Tuple

import numpy as np

from src.models.basisquad import evaluate_monomials, monomial_exponents, quad_edge, quad_triangle
from src.models.errors import MeshError, SourceError

logger = logging.getLogger(__name__)

MULTI_INDICES = ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))
MAX_APPROXIMATION_DEGREE = 4


class PiecewisePolynomial:
    """
    Elementwise polynomial of degree ``degree`` on a mesh.

    Coefficients refer to the scaled monomials of ``basisquad`` centred at the
    triangle centroid and scaled by the triangle diameter.
    """

    def __init__(self, mesh, degree, coefficients):
        self.mesh = mesh
        self.degree = int(degree)
        nm = len(monomial_exponents(self.degree))
        self.coefficients = np.asarray(coefficients, dtype=float).reshape(mesh.num_triangles, nm)

    @classmethod
    def zeros(cls, mesh, degree=0):
        return cls(mesh, degree, np.zeros((mesh.num_triangles, len(monomial_exponents(degree)))))

    @classmethod
    def constant(cls, mesh, values):
        """Piecewise constant with one value per triangle (or a scalar)."""
        values = np.broadcast_to(np.asarray(values, dtype=float), (mesh.num_triangles,))
        return cls(mesh, 0, values[:, None].copy())

    @classmethod
    def project(cls, mesh, function, degree, rule=None):
        """Elementwise L² projection Π_k of a callable by local mass-matrix solves."""
        rule = quad_triangle(10) if rule is None else rule
        tris = np.arange(mesh.num_triangles)
        xy = mesh.to_physical(tris, rule.points)
        basis = _scaled_monomials(mesh, tris, xy, degree)
        values = np.broadcast_to(np.asarray(function(xy[..., 0], xy[..., 1]), dtype=float), xy.shape[:-1])
        # least squares in the discrete inner product keeps the residual orthogonal to P_k
        root = np.sqrt(rule.weights)[None, :, None]
        q, r = np.linalg.qr(basis * root)
        rhs = np.einsum("tqi,tq->ti", q, values * root[..., 0])
        return cls(mesh, degree, np.linalg.solve(r, rhs[..., None])[..., 0])

    def __mul__(self, scalar):
        return PiecewisePolynomial(self.mesh, self.degree, scalar * self.coefficients)

    __rmul__ = __mul__

    def __add__(self, other):
        degree = max(self.degree, other.degree)
        return PiecewisePolynomial(self.mesh, degree, self.raised(degree) + other.raised(degree))

    def raised(self, degree):
        """Coefficients embedded into the monomial basis of a higher degree."""
        nm = len(monomial_exponents(degree))
        out = np.zeros((self.mesh.num_triangles, nm))
        out[:, :self.coefficients.shape[1]] = self.coefficients
        return out

    def is_zero(self, tol=0.0):
        return bool(np.all(np.abs(self.coefficients) <= tol))

    def is_constant(self, tol=1e-13):
        scale = max(1.0, float(np.abs(self.coefficients).max(initial=0.0)))
        return bool(np.all(np.abs(self.coefficients[:, 1:]) <= tol * scale))

    def derivative(self, axis):
        """Exact partial derivative in x (axis 0) or y (axis 1), same degree."""
        exps = monomial_exponents(self.degree)
        out = np.zeros_like(self.coefficients)
        scale = self.mesh.diameters
        for k, (a, b) in enumerate(exps):
            power = (a, b)[axis]
            if power == 0:
                continue
            target = (a - 1, b) if axis == 0 else (a, b - 1)
            j = _monomial_index(self.degree, target)
            out[:, j] += power * self.coefficients[:, k] / scale
        return PiecewisePolynomial(self.mesh, self.degree, out)

    def evaluate(self, tris, xy):
        """Values at physical points ``xy`` (m, nq, 2) in triangles ``tris`` (m,)."""
        basis = _scaled_monomials(self.mesh, tris, xy, self.degree)
        return np.einsum("mqi,mi->mq", basis, self.coefficients[tris])


def _monomial_index(degree, exponent):
    exps = monomial_exponents(degree)
    return int(np.flatnonzero((exps[:, 0] == exponent[0]) & (exps[:, 1] == exponent[1]))[0])


def _scaled_monomials(mesh, tris, xy, degree):
    centers = mesh.centroids[tris]
    scales = mesh.diameters[tris]
    rel = (xy - centers[:, None, :]) / scales[:, None, None]
    values, _, _ = evaluate_monomials(rel[..., 0], rel[..., 1], degree)
    return values


class EdgePolynomial:
    """Per-edge polynomial in the edge parameter t ∈ [0, 1] from A to B; zero off its edges."""

    def __init__(self, mesh, degree, coefficients):
        self.mesh = mesh
        self.degree = int(degree)
        self.coefficients = np.asarray(coefficients, dtype=float).reshape(mesh.num_edges, self.degree + 1)

    @classmethod
    def project(cls, mesh, function, edges, degree):
        """L² projection Π_{E,k} on each edge of ``edges``; zero elsewhere."""
        rule = quad_edge(9)
        coefficients = np.zeros((mesh.num_edges, degree + 1))
        edges = np.asarray(edges, dtype=np.int64)
        if len(edges):
            xy = edge_points(mesh, edges, rule.points)
            values = np.broadcast_to(np.asarray(function(xy[..., 0], xy[..., 1]), dtype=float), xy.shape[:-1])
            powers = rule.points[:, None] ** np.arange(degree + 1)
            mass = np.einsum("qi,qj,q->ij", powers, powers, rule.weights)
            rhs = np.einsum("qi,eq,q->ei", powers, values, rule.weights)
            coefficients[edges] = np.linalg.solve(mass, rhs.T).T
        return cls(mesh, degree, coefficients)

    def evaluate(self, t):
        powers = np.asarray(t, dtype=float)[:, None] ** np.arange(self.degree + 1)
        return self.coefficients @ powers.T


def edge_points(mesh, edges, t):
    a = mesh.vertices[mesh.edges[edges, 0]]
    b = mesh.vertices[mesh.edges[edges, 1]]
    return a[:, None, :] + np.asarray(t)[None, :, None] * (b - a)[:, None, :]


def density_values(density, mesh, tris, xy):
    """Evaluate a callable or piecewise-polynomial density at points of ``mesh``."""
    if isinstance(density, PiecewisePolynomial):
        if density.mesh is mesh:
            return density.evaluate(tris, xy)
        owner = density.mesh.locate(mesh.centroids[tris])
        if (owner < 0).any():
            raise SourceError("piecewise-polynomial density is not defined on this mesh")
        return density.evaluate(owner, xy)
    return np.asarray(density(xy[..., 0], xy[..., 1]), dtype=float) * np.ones(xy.shape[:-1])


@dataclass
class LineLoad:
    """Line load of order 0 (value) or 1 (normal derivative) along polygonal segments."""

    order: int
    segments: List[Tuple[Tuple[float, float], Tuple[float, float]]]
    density: Callable

    def __post_init__(self):
        if self.order not in (0, 1):
            raise SourceError(f"line load order must be 0 or 1, got {self.order}")

    @classmethod
    def from_edges(cls, mesh, order, edges, density):
        segments = [(tuple(mesh.vertices[mesh.edges[e, 0]]), tuple(mesh.vertices[mesh.edges[e, 1]]))
                    for e in edges]
        return cls(order, segments, density)

    def edges(self, mesh):
        found = []
        for start, end in self.segments:
            try:
                found.append(mesh.edges_on_segment(start, end))
            except MeshError as exc:
                raise SourceError(f"line load edge not in the mesh skeleton: {exc.message}") from exc
        if not found:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate(found))


@dataclass
class PointLoad:
    location: Tuple[float, float]
    intensity: float

    def vertex(self, mesh):
        z = mesh.find_vertex(self.location)
        if z is None:
            raise SourceError(f"point load at {self.location} is not at a mesh vertex")
        if mesh.boundary_vertices[z]:
            raise SourceError(f"point load at {self.location} is on the boundary")
        return z


@dataclass
class SourceApproximation:
    """Piecewise-polynomial data F_α (|α| ≤ 2) and edge data G_0, G_1 on one mesh."""

    mesh: object
    degree: int
    volume: Dict[Tuple[int, int], PiecewisePolynomial] = field(default_factory=dict)
    edge: Dict[int, EdgePolynomial] = field(default_factory=dict)

    def __post_init__(self):
        for alpha, poly in self.volume.items():
            if alpha not in MULTI_INDICES:
                raise SourceError(f"unknown multi-index {alpha}")
            if not isinstance(poly, PiecewisePolynomial):
                raise SourceError("approximation data must be piecewise polynomial")
            if poly.degree > MAX_APPROXIMATION_DEGREE:
                raise SourceError(f"approximation degree {poly.degree} exceeds {MAX_APPROXIMATION_DEGREE}")
        for j, poly in self.edge.items():
            if not isinstance(poly, EdgePolynomial):
                raise SourceError("edge approximation data must be piecewise polynomial")

    def component(self, alpha):
        return self.volume.get(alpha)

    def scaled(self, factor):
        return SourceApproximation(
            self.mesh, self.degree,
            {a: factor * p for a, p in self.volume.items()},
            {j: EdgePolynomial(p.mesh, p.degree, factor * p.coefficients) for j, p in self.edge.items()},
        )


@dataclass
class SourceSpec:
    """
    General load: volume densities keyed by multi-index, line and point loads.

    ``exact`` optionally carries a closed-form solution for error studies.
    """

    volume: Dict[Tuple[int, int], object] = field(default_factory=dict)
    line_loads: List[LineLoad] = field(default_factory=list)
    point_loads: List[PointLoad] = field(default_factory=list)
    name: str = "general"

    def __post_init__(self):
        for alpha in self.volume:
            if alpha not in MULTI_INDICES:
                raise SourceError(f"unknown multi-index {alpha}")

    @classmethod
    def l2(cls, f, name="l2"):
        return cls(volume={(0, 0): f}, name=name)

    @classmethod
    def zero(cls):
        return cls(name="zero")

    @property
    def is_zero(self):
        return not self.volume and not self.line_loads and not self.point_loads

    @property
    def is_l2(self):
        """True when the load is a single L² volume density."""
        return set(self.volume) <= {(0, 0)} and not self.line_loads and not self.point_loads

    def line_loads_of_order(self, order):
        return [load for load in self.line_loads if load.order == order]

    def approximate(self, mesh, degree=2):
        """Elementwise and edgewise L² projections of all data onto polynomials of ``degree``."""
        if not 0 <= degree <= MAX_APPROXIMATION_DEGREE:
            raise SourceError(f"approximation degree must be in 0..{MAX_APPROXIMATION_DEGREE}")
        volume = {}
        for alpha, density in self.volume.items():
            volume[alpha] = PiecewisePolynomial.project(
                mesh, lambda x, y, d=density: _callable_values(d, mesh, x, y), degree)
        edge = {}
        for order in (0, 1):
            loads = self.line_loads_of_order(order)
            if not loads:
                continue
            coefficients = np.zeros((mesh.num_edges, degree + 1))
            for load in loads:
                coefficients += EdgePolynomial.project(mesh, load.density, load.edges(mesh), degree).coefficients
            edge[order] = EdgePolynomial(mesh, degree, coefficients)
        return SourceApproximation(mesh, degree, volume, edge)


def _callable_values(density, mesh, x, y):
    if isinstance(density, PiecewisePolynomial):
        xy = np.stack([x, y], axis=-1)
        tris = np.arange(mesh.num_triangles)
        return density_values(density, mesh, tris, xy)
    return density(x, y)


def functional_source(mesh, lam0=None, lam1=None, lam2=None):
    """
    Load built from piecewise polynomials Λ₀, Λ₁ = (Λ₁ₓ, Λ₁ᵧ), Λ₂ (2x2 symmetric).

    The functional is (Λ₀, v) + (Λ₁, ∇v) + (Λ₂, D²v); the off-diagonal entry
    of Λ₂ enters the ∂xy density twice.
    """
    volume = {}
    if lam0 is not None:
        volume[(0, 0)] = lam0
    if lam1 is not None:
        volume[(1, 0)], volume[(0, 1)] = lam1
    if lam2 is not None:
        (l11, l12), (_, l22) = lam2
        volume[(2, 0)] = l11
        volume[(1, 1)] = 2.0 * l12
        volume[(0, 2)] = l22
    return SourceSpec(volume=volume, name="functional")


def exact_approximation(mesh, source):
    """Approximation data equal to piecewise-polynomial volume densities of ``source``."""
    volume = {}
    degree = 0
    for alpha, density in source.volume.items():
        if not isinstance(density, PiecewisePolynomial) or density.mesh is not mesh:
            raise SourceError("exact approximation requires piecewise polynomials on the same mesh")
        volume[alpha] = density
        degree = max(degree, density.degree)
    return SourceApproximation(mesh, degree, volume, {})
