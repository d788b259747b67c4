"""
Bilinear forms, load vectors and linear solves for the five plate schemes.

Schemes (all on P2-based spaces):

* ``morley``  a_pw on the Morley space
* ``dg1``     a_pw + b_h + c_dG, consistency term ∫ [∇v]·⟨D²w⟩ν
* ``dg2``     (Δ_pw, Δ_pw) + b_h + c_dG, consistency term ∫ [∂v/∂ν]⟨Δw⟩
* ``c0ip``    a_pw + b_h + c_IP on S²₀ (symmetric, Θ = 1)
* ``wopsip``  a_pw + c_P with c_P = Σ_E h_E⁻² times the j_h edge terms

with b_h(v, w) = -Θ J(v, w) - J(w, v).
"""

import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict, Field
from scipy import sparse
from scipy.sparse.linalg import ArpackNoConvergence, eigsh, splu

from src.models.basisquad import quad_edge, quad_macro, quad_triangle
from src.models.errors import NumericalError, SolverError, SourceError
from src.models.sources import density_values
from src.models.spaces import (
    DiscreteField, build_space, dofmap, edge_shape_traces, jh_matrix_rows,
)
from src.models.transfer import smoother_matrix

logger = logging.getLogger(__name__)

SCHEMES = ("morley", "dg1", "dg2", "c0ip", "wopsip")
CHUNK = 256
DENSE_EIGEN_LIMIT = 2500


class SchemeConfig(BaseModel):
    """Discretization identifier with its penalty and consistency parameters."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: Literal["morley", "dg1", "dg2", "c0ip", "wopsip"]
    theta: float = Field(1.0, ge=-1.0, le=1.0)
    sigma1: float = Field(20.0, gt=0.0)
    sigma2: float = Field(20.0, gt=0.0)
    sigma_ip: float = Field(20.0, gt=0.0)
    smoother: Literal["identity", "jh"] = "identity"
    quadrature_degree: int = Field(6, ge=1, le=10)

    @property
    def nominally_symmetric(self):
        return self.name in ("morley", "wopsip", "c0ip") or self.theta == 1.0


@dataclass
class LinearSystem:
    matrix: sparse.csr_matrix
    rhs: np.ndarray
    symmetric: bool
    dofmap: object


@dataclass
class HConstantEstimate:
    value: float
    samples: int
    skipped: int


def _chunks(n, size=CHUNK):
    for start in range(0, n, size):
        yield np.arange(start, min(start + size, n))


# ---------------------------------------------------------------------- #
# Gram matrices
# ---------------------------------------------------------------------- #
def gram(dm_a, dm_b=None, kind="hessian"):
    """
    Sparse matrix G[i, j] = (D φ_i, D ψ_j) with φ from ``dm_a`` and ψ from ``dm_b``.

    ``kind`` selects the pairing: "hessian" (a_pw), "laplacian" or "value" (L²).
    """
    dm_b = dm_a if dm_b is None else dm_b
    if dm_a.mesh is not dm_b.mesh:
        raise NumericalError("Gram matrix of spaces on different meshes")
    mesh = dm_a.mesh
    macro = "HCT" in (dm_a.kind, dm_b.kind)
    if kind == "value":
        degree = 6 if macro else 4
    else:
        degree = 2 if macro else 1
    rule = quad_macro(degree) if macro else quad_triangle(degree)
    order = 0 if kind == "value" else 2

    rows, cols, data = [], [], []
    for tris in _chunks(mesh.num_triangles):
        fa = _derivative(dm_a.basis.evaluate(tris, rule.points, rule.sub), order, kind)
        fb = fa if dm_b is dm_a else _derivative(dm_b.basis.evaluate(tris, rule.points, rule.sub), order, kind)
        weights = rule.weights[None, :] * 2.0 * mesh.areas[tris][:, None]
        if kind == "hessian":
            local = np.einsum("tqiab,tqjab,tq->tij", fa, fb, weights)
        else:
            local = np.einsum("tqi,tqj,tq->tij", fa, fb, weights)
        r = np.broadcast_to(dm_a.cell_dofs[tris][:, :, None], local.shape)
        c = np.broadcast_to(dm_b.cell_dofs[tris][:, None, :], local.shape)
        keep = (r >= 0) & (c >= 0)
        rows.append(r[keep]), cols.append(c[keep]), data.append(local[keep])
    return sparse.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dm_a.ndof, dm_b.ndof),
    ).tocsr()


def _derivative(evaluated, order, kind):
    values, _, hessians = evaluated
    if order == 0:
        return values
    if kind == "laplacian":
        return hessians[..., 0, 0] + hessians[..., 1, 1]
    return hessians


def jh_matrix(dm, weights=None):
    """Sparse matrix of j_h on ``dm``; optional per-edge weights multiply each edge's terms."""
    rows = jh_matrix_rows(dm)
    if weights is None:
        return (rows.T @ rows).tocsr()
    scale = sparse.diags(np.repeat(np.asarray(weights, dtype=float), 3))
    return (rows.T @ scale @ rows).tocsr()


# ---------------------------------------------------------------------- #
# bilinear forms
# ---------------------------------------------------------------------- #
def bilinear_parts(mesh, config):
    """
    The building blocks of a scheme's matrix.

    Returns:
        dict: "a_pw" (or "laplace" for dg2), "J" with J[i, j] = J(φ_i, φ_j),
        and the stabilization "c"
    """
    dm = dofmap(mesh, config.name)
    parts = {"a_pw": gram(dm)}
    if config.name == "morley":
        return parts
    if config.name == "wopsip":
        parts["c"] = jh_matrix(dm, mesh.edge_lengths ** -2)
        return parts
    if config.name == "dg2":
        parts["laplace"] = gram(dm, kind="laplacian")

    rule = quad_edge(4)
    tr = edge_shape_traces(dm, rule.points)
    sign = tr.signed
    h = mesh.edge_lengths
    normals = mesh.normals
    jump_val = tr.values * sign
    jump_grad = tr.grads * sign[:, None]
    jump_dn = np.einsum("eqnd,ed->eqn", jump_grad, normals)
    hess = tr.hessians[:, 0]  # Hessians of P2 shapes are constant
    avg_hess_n = np.einsum("enab,eb->ena", hess, normals) * tr.side_weight[..., None]
    avg_lap = (hess[..., 0, 0] + hess[..., 1, 1]) * tr.side_weight

    if config.name == "dg2":
        consistency = np.einsum("eqi,ej,q->eij", jump_dn, avg_lap, rule.weights) * h[:, None, None]
    else:
        consistency = np.einsum("eqia,eja,q->eij", jump_grad, avg_hess_n, rule.weights) * h[:, None, None]
    parts["J"] = dm.scatter_matrix(consistency, tr.dofs, tr.dofs)

    normal_mass = np.einsum("eqi,eqj,q->eij", jump_dn, jump_dn, rule.weights) * h[:, None, None]
    if config.name == "c0ip":
        penalty = config.sigma_ip / h[:, None, None] * normal_mass
    else:
        value_mass = np.einsum("eqi,eqj,q->eij", jump_val, jump_val, rule.weights) * h[:, None, None]
        penalty = config.sigma1 / h[:, None, None] ** 3 * value_mass + config.sigma2 / h[:, None, None] * normal_mass
    parts["c"] = dm.scatter_matrix(penalty, tr.dofs, tr.dofs)
    return parts


def assemble_matrix(mesh, config):
    """Sparse system matrix A[i, j] = a_h(φ_j, φ_i) of the configured scheme."""
    parts = bilinear_parts(mesh, config)
    if config.name == "morley":
        return parts["a_pw"]
    if config.name == "wopsip":
        return (parts["a_pw"] + parts["c"]).tocsr()
    theta = 1.0 if config.name == "c0ip" else config.theta
    volume = parts["laplace"] if config.name == "dg2" else parts["a_pw"]
    consistency = parts["J"]
    return (volume - theta * consistency.T - consistency + parts["c"]).tocsr()


def form_value(matrix, v, w):
    """a_h(v, w) for coefficient vectors of the trial ``v`` and test ``w``."""
    return float(w @ (matrix @ v))


# ---------------------------------------------------------------------- #
# loads
# ---------------------------------------------------------------------- #
_DERIVATIVE_PICK = {
    (0, 0): lambda v, g, h: v,
    (1, 0): lambda v, g, h: g[..., 0],
    (0, 1): lambda v, g, h: g[..., 1],
    (2, 0): lambda v, g, h: h[..., 0, 0],
    (1, 1): lambda v, g, h: h[..., 0, 1],
    (0, 2): lambda v, g, h: h[..., 1, 1],
}


def load_vector(dm, source, degree=6):
    """
    Entries F̂(φ_i) of a general load for the basis of ``dm``.

    Traces on edges are averaged over both sides and point loads are split
    equally over the triangles of the vertex patch, which is exact for
    continuous spaces.
    """
    mesh = dm.mesh
    b = np.zeros(dm.ndof)
    if source.volume:
        macro = dm.kind == "HCT"
        rule = quad_macro(min(degree + 1, 10)) if macro else quad_triangle(degree)
        for tris in _chunks(mesh.num_triangles):
            v, g, h = dm.basis.evaluate(tris, rule.points, rule.sub)
            xy = mesh.to_physical(tris, rule.points)
            weights = rule.weights[None, :] * 2.0 * mesh.areas[tris][:, None]
            local = np.zeros((len(tris), dm.nloc))
            for alpha, density in source.volume.items():
                f = density_values(density, mesh, tris, xy)
                local += np.einsum("tq,tqn->tn", f * weights, _DERIVATIVE_PICK[alpha](v, g, h))
            b += dm.scatter_vector(local, dm.cell_dofs[tris])

    if source.line_loads:
        rule = quad_edge(6)
        tr = edge_shape_traces(dm, rule.points)
        for load in source.line_loads:
            edges = load.edges(mesh)
            if len(edges) == 0:
                continue
            a = mesh.vertices[mesh.edges[edges, 0]]
            d = mesh.vertices[mesh.edges[edges, 1]] - a
            xy = a[:, None, :] + rule.points[None, :, None] * d[:, None, :]
            g = np.asarray(load.density(xy[..., 0], xy[..., 1]), dtype=float) * np.ones(xy.shape[:-1])
            if load.order == 0:
                trace = tr.values[edges]
            else:
                trace = np.einsum("eqnd,ed->eqn", tr.grads[edges], mesh.normals[edges])
            avg = trace * tr.side_weight[edges][:, None, :]
            local = np.einsum("eq,eqn,q->en", g, avg, rule.weights) * mesh.edge_lengths[edges][:, None]
            b += dm.scatter_vector(local, tr.dofs[edges])

    for load in source.point_loads:
        z = load.vertex(mesh)
        patch = mesh.vertex_patch(z)
        for t in patch:
            k = int(np.flatnonzero(mesh.triangles[t] == z)[0])
            corner = np.zeros((1, 3))
            corner[0, k] = 1.0
            values, _, _ = dm.basis.evaluate(np.array([t]), corner, np.array([(k + 1) % 3]))
            local = load.intensity / len(patch) * values[:, 0, :]
            b += dm.scatter_vector(local, dm.cell_dofs[[t]])
    return b


def assemble_rhs(mesh, config, source):
    """Right-hand side F̂(Q φ_i) with Q the identity or the smoother J_h."""
    dm = dofmap(mesh, config.name)
    try:
        if config.smoother == "identity":
            return load_vector(dm, source, config.quadrature_degree)
        hct = build_space(mesh, "hct")
        return smoother_matrix(dm).T @ load_vector(hct, source, config.quadrature_degree)
    except SourceError as exc:
        raise exc.with_stage("assembly")


def assemble(mesh, config, source):
    matrix = assemble_matrix(mesh, config)
    rhs = assemble_rhs(mesh, config, source)
    asym = abs(matrix - matrix.T).max() if matrix.nnz else 0.0
    scale = max(1.0, abs(matrix).max() if matrix.nnz else 0.0)
    symmetric = config.nominally_symmetric and asym <= 1e-12 * scale
    return LinearSystem(matrix, rhs, symmetric, dofmap(mesh, config.name))


# ---------------------------------------------------------------------- #
# solve
# ---------------------------------------------------------------------- #
def solve_linear(system, tol=1e-10, max_refinements=8):
    """
    Sparse LU solve with the residual contract ‖Ax - b‖ ≤ tol ‖b‖.

    The matrix is scaled symmetrically by its diagonal before factorization.
    Iterative refinement runs on the unscaled system with the iterate and the
    residual kept in extended precision, and the contract is checked there.
    """
    matrix = sparse.csc_matrix(system.matrix)
    rhs = np.asarray(system.rhs, dtype=float)
    norm_b = np.linalg.norm(rhs)
    if norm_b == 0.0:
        return np.zeros_like(rhs)
    diagonal = np.abs(matrix.diagonal())
    scale = np.ones_like(diagonal)
    positive = diagonal > 0.0
    scale[positive] = 1.0 / np.sqrt(diagonal[positive])
    d = sparse.diags(scale)
    try:
        lu = splu(sparse.csc_matrix(d @ matrix @ d))
    except RuntimeError as exc:
        raise SolverError(f"factorization failed: {exc}", smallest_pivot=0.0) from exc
    smallest = float(np.abs(lu.U.diagonal()).min())
    if smallest == 0.0 or not np.isfinite(smallest):
        raise SolverError("singular factorization", smallest_pivot=smallest)

    wide = matrix.astype(np.longdouble)
    rhs_wide = rhs.astype(np.longdouble)

    def correction(r):
        return scale * lu.solve(scale * np.asarray(r, dtype=float))

    x = correction(rhs).astype(np.longdouble)
    r = rhs_wide - wide @ x
    residual = float(np.linalg.norm(r) / norm_b)
    steps = 0
    while steps < max_refinements and np.isfinite(residual) and residual > tol:
        x = x + correction(r)
        r = rhs_wide - wide @ x
        residual = float(np.linalg.norm(r) / norm_b)
        steps += 1
    logger.debug("LU solve: n=%d, %d refinement steps, residual %.2e, smallest pivot %.2e",
                 len(rhs), steps, residual, smallest)
    if not np.isfinite(residual) or residual > tol:
        raise SolverError("residual contract violated", smallest_pivot=smallest, residual=residual)
    return x.astype(float)


def solve(mesh, config, source):
    """Assemble and solve; returns the discrete solution field."""
    system = assemble(mesh, config, source)
    return DiscreteField(system.dofmap, solve_linear(system))


# ---------------------------------------------------------------------- #
# ellipticity and condition (H)
# ---------------------------------------------------------------------- #
def h_norm_matrix(dm):
    """Gram matrix of ‖·‖_h² = |||·|||²_pw + j_h(·, ·)."""
    return (gram(dm) + jh_matrix(dm)).tocsr()


def estimate_ellipticity(mesh, config):
    """Smallest generalized eigenvalue of (sym A, Gram of ‖·‖_h)."""
    if not config.nominally_symmetric:
        logger.warning("ellipticity of a non-symmetric %s form is estimated from its symmetric part", config.name)
    dm = dofmap(mesh, config.name)
    matrix = assemble_matrix(mesh, config)
    sym = 0.5 * (matrix + matrix.T)
    norm = h_norm_matrix(dm)
    if dm.ndof <= DENSE_EIGEN_LIMIT:
        values = scipy.linalg.eigh(sym.toarray(), norm.toarray(), eigvals_only=True, subset_by_index=[0, 0])
        alpha = float(values[0])
    else:
        try:
            values = eigsh(sym.tocsc(), k=1, M=norm.tocsc(), sigma=0.0, which="LM", maxiter=2000)[0]
        except ArpackNoConvergence as exc:
            raise NumericalError("eigensolve did not converge", stage="ellipticity") from exc
        alpha = float(values[0])
    logger.info("%s ellipticity estimate on %r: %.6g", config.name, mesh, alpha)
    return alpha


def estimate_H_constant(mesh, config, samples=100, seed=20240101, pairs=None):
    """
    Lower bound for the constant in a_h(w, v) - a(J_h w, J_h v) ≤ Λ ‖w - J_h w‖_h ‖v‖_h.

    Samples random coefficient pairs plus extremal generalized eigenvectors;
    explicit ``pairs`` of coefficient vectors are used instead when given.
    """
    dm = dofmap(mesh, config.name)
    hct = build_space(mesh, "hct")
    matrix = assemble_matrix(mesh, config)
    smooth = smoother_matrix(dm)
    energy_hct = gram(hct)
    energy = gram(dm)
    cross = gram(dm, hct)
    jumps = jh_matrix(dm)
    norm = energy + jumps

    if pairs is None:
        rng = np.random.default_rng(seed)
        pairs = [(rng.standard_normal(dm.ndof), rng.standard_normal(dm.ndof)) for _ in range(samples)]
        if dm.ndof <= DENSE_EIGEN_LIMIT:
            _, vectors = scipy.linalg.eigh(0.5 * (matrix + matrix.T).toarray(), norm.toarray())
            extremal = [vectors[:, k] for k in (0, 1, 2, -1, -2, -3) if abs(k) < dm.ndof]
            pairs += [(a, b) for a in extremal for b in extremal]

    best, used, skipped = 0.0, 0, 0
    for w, v in pairs:
        jw, jv = smooth @ w, smooth @ v
        numerator = v @ (matrix @ w) - jv @ (energy_hct @ jw)
        distance = w @ (energy @ w) - 2.0 * w @ (cross @ jw) + jw @ (energy_hct @ jw) + w @ (jumps @ w)
        distance = np.sqrt(max(distance, 0.0))
        size = np.sqrt(max(w @ (norm @ w), 0.0))
        if distance <= 1e-14 * max(1.0, size):
            skipped += 1
            continue
        v_norm = np.sqrt(max(v @ (norm @ v), 0.0))
        if v_norm == 0.0:
            skipped += 1
            continue
        best = max(best, abs(numerator) / (distance * v_norm))
        used += 1
    if skipped:
        logger.warning("condition (H) sampling skipped %d pairs with vanishing denominator", skipped)
    return HConstantEstimate(best, used, skipped)
