"""
Dual norms of load functionals.

``functional_dualnorm`` evaluates the residual estimator μ of a piecewise
polynomial functional (Λ₀, Λ₁, Λ₂) with zero discrete solution.
``surrogate_dual_norm`` computes the energy norm of the Riesz representative
of a functional in the HCT space of a uniformly refined mesh, a computable
lower bound of its dual norm.
"""

import logging

import numpy as np
from scipy import sparse

from src.models.assembly import LinearSystem, gram, load_vector, solve_linear
from src.models.errors import NumericalError, SourceError
from src.models.estimate import general_mu
from src.models.mesh import refine_uniform
from src.models.sources import SourceApproximation, SourceSpec, functional_source
from src.models.spaces import DiscreteField, build_space
from src.models.transfer import c0_transfer_matrix, companion_matrix, morley_interpolation_matrix

logger = logging.getLogger(__name__)

MAX_DEPTH = 3


def functional_dualnorm(mesh, lam0=None, lam1=None, lam2=None, scheme="morley"):
    """μ of the functional (Λ₀, v) + (Λ₁, ∇v) + (Λ₂, D²v) with u_h = 0 and no data error."""
    source = functional_source(mesh, lam0, lam1, lam2)
    degree = max([poly.degree for poly in source.volume.values()], default=0)
    approx = SourceApproximation(mesh, degree, dict(source.volume), {})
    return general_mu(mesh, approx, None, scheme)


# ---------------------------------------------------------------------- #
# functionals with load vectors on HCT spaces
# ---------------------------------------------------------------------- #
class SourceFunctional:
    """A general load F̂ restricted to H²₀."""

    def __init__(self, source, degree=8):
        self.source = source
        self.degree = degree

    def load_vector(self, dm):
        return load_vector(dm, self.source, self.degree)


class EnergyFunctional:
    """a(u, ·) for a conforming field u."""

    def __init__(self, field):
        self.field = field

    def load_vector(self, dm):
        if dm.mesh is self.field.mesh:
            return gram(dm, self.field.dofmap) @ self.field.coefficients
        return load_vector(dm, SourceSpec(volume=_hessian_densities(self.field), name="energy"), 8)


def _hessian_densities(field):
    mesh = field.mesh

    def component(a, b, factor):
        def density(x, y):
            points = np.stack([np.ravel(x), np.ravel(y)], axis=1)
            tris = mesh.locate(points)
            if (tris < 0).any():
                raise SourceError("evaluation point outside the field's mesh")
            bary = mesh.barycentric(tris, points)
            _, _, hess = field.evaluate(tris, bary[:, None, :])
            return factor * hess[:, 0, a, b].reshape(np.shape(x))
        return density

    return {(2, 0): component(0, 0, 1.0), (1, 1): component(0, 1, 2.0), (0, 2): component(1, 1, 1.0)}


class ComposedFunctional:
    """
    Λ ∘ (1 - J_h I_h I_M) with the transfer chain of ``scheme`` on ``coarse``.

    Valid on HCT spaces of uniform refinements of ``coarse``; I_h = I_C for the
    C⁰ interior penalty scheme and the identity otherwise.
    """

    def __init__(self, functional, coarse, scheme="morley"):
        self.functional = functional
        self.coarse = coarse
        self.scheme = scheme

    def chain_matrix(self):
        """Coarse Morley coefficients -> coarse HCT coefficients of J_h I_h."""
        companion = companion_matrix(self.coarse)
        if self.scheme != "c0ip":
            return companion
        c0 = build_space(self.coarse, "c0ip")
        return (companion @ morley_interpolation_matrix(c0) @ c0_transfer_matrix(self.coarse)).tocsr()

    def load_vector(self, dm):
        fine = self.functional.load_vector(dm)
        coarse = self.functional.load_vector(build_space(self.coarse, "hct"))
        restriction = fine_hct_to_coarse_morley(dm, self.coarse)
        return fine - restriction.T @ (self.chain_matrix().T @ coarse)


def fine_hct_to_coarse_morley(fine_hct, coarse):
    """
    Sparse matrix of I_M on ``coarse`` applied to HCT fields of a refinement.

    Coarse vertices keep their ids under refinement. Edge means of the normal
    derivative use Simpson's rule on every fine sub-edge.
    """
    fine = fine_hct.mesh
    morley = build_space(coarse, "morley")
    rows, cols, data = [], [], []
    inner_v = coarse.interior_vertices
    for k, z in enumerate(inner_v):
        rows.append(k), cols.append(fine_hct.vertex_dof(int(z), 0)), data.append(1.0)

    offset = len(inner_v)
    for k, e in enumerate(np.flatnonzero(coarse.interior_edges)):
        a, b = coarse.vertices[coarse.edges[e]]
        normal = coarse.normals[e]
        length = coarse.edge_lengths[e]
        for sub in fine.edges_on_segment(a, b):
            share = fine.edge_lengths[sub] / length
            for z in fine.edges[sub]:
                for c in (1, 2):
                    dof = fine_hct.vertex_dof(int(z), c)
                    if dof >= 0:
                        rows.append(offset + k), cols.append(dof), data.append(share * normal[c - 1] / 6.0)
            dof = fine_hct.edge_dof(int(sub))
            if dof >= 0:
                sign = float(np.sign(fine.normals[sub] @ normal))
                rows.append(offset + k), cols.append(dof), data.append(share * 4.0 * sign / 6.0)
    keep = np.asarray(cols) >= 0
    return sparse.coo_matrix(
        (np.asarray(data)[keep], (np.asarray(rows)[keep], np.asarray(cols)[keep])),
        shape=(morley.ndof, fine_hct.ndof),
    ).tocsr()


def as_functional(obj):
    if isinstance(obj, SourceSpec):
        return SourceFunctional(obj)
    if isinstance(obj, DiscreteField):
        return EnergyFunctional(obj)
    if not hasattr(obj, "load_vector"):
        raise SourceError(f"cannot build a load vector from {type(obj).__name__}")
    return obj


def surrogate_dual_norm(mesh, functional, depth=2):
    """
    Energy norm of the Riesz representative of ``functional`` in the HCT space
    of ``mesh`` refined ``depth`` times; approaches the dual norm from below as
    ``depth`` grows.
    """
    if not 0 <= depth <= MAX_DEPTH:
        raise NumericalError(f"refinement depth must be in 0..{MAX_DEPTH}", stage="estimate")
    functional = as_functional(functional)
    fine = mesh
    for _ in range(depth):
        fine = refine_uniform(fine)
    hct = build_space(fine, "hct")
    rhs = functional.load_vector(hct)
    if not np.any(rhs):
        return 0.0
    x = solve_linear(LinearSystem(gram(hct), rhs, True, hct))
    value = float(np.sqrt(max(rhs @ x, 0.0)))
    logger.debug("surrogate dual norm at depth %d (%d dofs): %.6e", depth, hct.ndof, value)
    return value
