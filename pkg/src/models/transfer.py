"""
Transfer operators between the discrete spaces.

All operators are linear and are built as sparse matrices acting on
coefficient vectors; the field-level functions apply them. The chain

    I_M : any P2-based or HCT field  -> Morley   (averaged interpolation)
    I_C : Morley                      -> S²₀      (Lagrange transfer)
    J   : Morley                      -> HCT      (companion, right inverse of I_M)
    J_h = J o I_M                                 (smoother into H²₀)

is what the smoothed right-hand sides and the a posteriori analysis use.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from src.models.basisquad import P2_NODES, quad_edge, quad_macro
from src.models.errors import TransferError
from src.models.spaces import (
    DiscreteField, build_space, edge_traces, evaluate_piecewise, jh_functionals,
    edge_shape_traces,
)

logger = logging.getLogger(__name__)

IDENTITY_VERTICES = np.eye(3)


def _cached(mesh, key, build):
    matrices = mesh.cache.setdefault("transfer", {})
    if key not in matrices:
        matrices[key] = build()
    return matrices[key]


def _vertex_hints():
    # vertex k of a triangle lies in HCT sub-triangle k + 1
    return np.array([1, 2, 0])


# ---------------------------------------------------------------------- #
# matrices
# ---------------------------------------------------------------------- #
def morley_interpolation_matrix(source_map):
    """Sparse matrix of I_M from ``source_map`` into the Morley space of the same mesh."""
    mesh = source_map.mesh
    return _cached(mesh, ("I_M", source_map.space), lambda: _build_morley_interpolation(source_map))


def _build_morley_interpolation(source_map):
    mesh = source_map.mesh
    morley = build_space(mesh, "morley")
    nt = mesh.num_triangles
    rows, cols, data = [], [], []

    values, _, _ = source_map.basis.evaluate(np.arange(nt), IDENTITY_VERTICES, _vertex_hints())
    weight = 1.0 / mesh.vertex_patch_sizes[mesh.triangles]  # (nt, 3)
    target = _morley_vertex_index(morley)[mesh.triangles]
    for k in range(3):
        block = values[:, k, :] * weight[:, k][:, None]
        r = np.broadcast_to(target[:, k][:, None], block.shape)
        c = source_map.cell_dofs
        keep = (r >= 0) & (c >= 0)
        rows.append(r[keep]), cols.append(c[keep]), data.append(block[keep])

    rule = quad_edge(4)
    traces = edge_shape_traces(source_map, rule.points)
    normal_mean = np.einsum("eqnd,ed,q->en", traces.grads, mesh.normals, rule.weights)
    block = normal_mean * traces.side_weight
    edge_rows = _morley_edge_index(morley)
    r = np.broadcast_to(edge_rows[:, None], block.shape)
    keep = (r >= 0) & (traces.dofs >= 0)
    rows.append(r[keep]), cols.append(traces.dofs[keep]), data.append(block[keep])

    matrix = sparse.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(morley.ndof, source_map.ndof),
    ).tocsr()
    matrix.eliminate_zeros()
    return matrix


def _morley_vertex_index(morley):
    mesh = morley.mesh
    index = np.full(mesh.num_vertices, -1)
    index[mesh.interior_vertices] = np.arange(len(mesh.interior_vertices))
    return index


def _morley_edge_index(morley):
    mesh = morley.mesh
    index = np.full(mesh.num_edges, -1)
    inner = np.flatnonzero(mesh.interior_edges)
    index[inner] = len(mesh.interior_vertices) + np.arange(len(inner))
    return index


def _vertex_gradient_rows(morley):
    """Sparse (nv, nM) matrices averaging the Morley gradients over T(z); zero rows on ∂Ω."""
    mesh = morley.mesh
    nt = mesh.num_triangles
    _, grads, _ = morley.basis.evaluate(np.arange(nt), IDENTITY_VERTICES)
    weight = 1.0 / mesh.vertex_patch_sizes[mesh.triangles]
    interior = ~mesh.boundary_vertices
    out = []
    for d in range(2):
        rows, cols, data = [], [], []
        for k in range(3):
            z = mesh.triangles[:, k]
            block = grads[:, k, :, d] * weight[:, k][:, None]
            r = np.broadcast_to(z[:, None], block.shape)
            c = morley.cell_dofs
            keep = (c >= 0) & interior[r]
            rows.append(r[keep]), cols.append(c[keep]), data.append(block[keep])
        out.append(sparse.coo_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(mesh.num_vertices, morley.ndof),
        ).tocsr())
    return out


def companion_matrix(mesh):
    """Sparse matrix of the companion J from Morley into HCT coefficients."""
    return _cached(mesh, ("J",), lambda: _build_companion(mesh))


def _build_companion(mesh):
    morley = build_space(mesh, "morley")
    hct = build_space(mesh, "hct")
    nM = morley.ndof
    inner_v = mesh.interior_vertices
    inner_e = np.flatnonzero(mesh.interior_edges)
    nv_in = len(inner_v)

    vertex_index = _morley_vertex_index(morley)
    values = sparse.csr_matrix((np.ones(nv_in), (np.arange(nv_in), vertex_index[inner_v])), shape=(nv_in, nM))
    gx, gy = _vertex_gradient_rows(morley)

    # Simpson on the quadratic normal-derivative trace: mean = (g(A) + 4 g(mid) + g(B)) / 6
    ends = mesh.edges[inner_e]
    pick = lambda col: sparse.csr_matrix(
        (np.ones(len(inner_e)), (np.arange(len(inner_e)), ends[:, col])),
        shape=(len(inner_e), mesh.num_vertices))
    both = pick(0) + pick(1)
    nx = sparse.diags(mesh.normals[inner_e, 0])
    ny = sparse.diags(mesh.normals[inner_e, 1])
    edge_index = _morley_edge_index(morley)
    means = sparse.csr_matrix((np.ones(len(inner_e)), (np.arange(len(inner_e)), edge_index[inner_e])),
                              shape=(len(inner_e), nM))
    mid = 1.5 * means - 0.25 * (nx @ both @ gx + ny @ both @ gy)

    stacked = sparse.vstack([values, gx[inner_v], gy[inner_v]]).tocsr()
    order = np.empty(3 * nv_in, dtype=np.int64)
    for c in range(3):
        order[c::3] = c * nv_in + np.arange(nv_in)
    matrix = sparse.vstack([stacked[order], mid]).tocsr()
    if matrix.shape != (hct.ndof, nM):
        raise TransferError("companion matrix does not match the HCT space")
    return matrix


def c0_transfer_matrix(mesh):
    """Sparse matrix of I_C from Morley into S²₀."""
    return _cached(mesh, ("I_C",), lambda: _build_c0_transfer(mesh))


def _build_c0_transfer(mesh):
    morley = build_space(mesh, "morley")
    c0 = build_space(mesh, "c0ip")
    inner_v = mesh.interior_vertices
    nv_in = len(inner_v)
    vertex_index = _morley_vertex_index(morley)
    vertex_part = sparse.csr_matrix((np.ones(nv_in), (np.arange(nv_in), vertex_index[inner_v])),
                                    shape=(nv_in, morley.ndof))
    traces = edge_shape_traces(morley, np.array([0.5]))
    block = traces.values[:, 0, :] * 0.5
    inner_e = np.flatnonzero(mesh.interior_edges)
    rows = np.broadcast_to(np.full(mesh.num_edges, -1)[:, None], block.shape).copy()
    rows[inner_e] = np.arange(len(inner_e))[:, None]
    keep = (rows >= 0) & (traces.dofs >= 0)
    edge_part = sparse.coo_matrix((block[keep], (rows[keep], traces.dofs[keep])),
                                  shape=(len(inner_e), morley.ndof)).tocsr()
    matrix = sparse.vstack([vertex_part, edge_part]).tocsr()
    if matrix.shape != (c0.ndof, morley.ndof):
        raise TransferError("transfer matrix does not match the S²₀ space")
    return matrix


def broken_matrix(source_map):
    """Sparse matrix re-expressing a P2-based field in the discontinuous P2 space."""
    mesh = source_map.mesh
    if source_map.kind not in ("P2", "Morley"):
        raise TransferError(f"{source_map.space} fields are not piecewise quadratic")
    return _cached(mesh, ("broken", source_map.space), lambda: _build_broken(source_map))


def _build_broken(source_map):
    mesh = source_map.mesh
    dg = build_space(mesh, "dg")
    nt = mesh.num_triangles
    values, _, _ = source_map.basis.evaluate(np.arange(nt), P2_NODES)  # (nt, 6, nloc)
    rows = np.broadcast_to(dg.cell_dofs[:, :, None], values.shape)
    cols = np.broadcast_to(source_map.cell_dofs[:, None, :], values.shape)
    keep = cols >= 0
    return sparse.coo_matrix((values[keep], (rows[keep], cols[keep])), shape=(dg.ndof, source_map.ndof)).tocsr()


def smoother_matrix(source_map):
    """Sparse matrix of J_h = J o I_M from ``source_map`` into HCT coefficients."""
    mesh = source_map.mesh
    return _cached(mesh, ("J_h", source_map.space),
                   lambda: (companion_matrix(mesh) @ morley_interpolation_matrix(source_map)).tocsr())


# ---------------------------------------------------------------------- #
# field-level operators
# ---------------------------------------------------------------------- #
def interpolate_morley(source, mesh=None):
    """
    Averaged Morley interpolation I_M.

    Args:
        source: DiscreteField of any space, or ClosedForm together with ``mesh``
        mesh: required for closed-form sources

    Returns:
        DiscreteField in the Morley space
    """
    if isinstance(source, DiscreteField):
        if mesh is not None and mesh is not source.mesh:
            raise TransferError("input is not on the requested mesh")
        matrix = morley_interpolation_matrix(source.dofmap)
        return DiscreteField(build_space(source.mesh, "morley"), matrix @ source.coefficients)
    if mesh is None:
        raise TransferError("a mesh is required to interpolate a closed-form function")
    morley = build_space(mesh, "morley")
    coefficients = np.zeros(morley.ndof)

    values, _, _ = evaluate_piecewise(source, mesh, np.arange(mesh.num_triangles), IDENTITY_VERTICES)
    sums = np.zeros(mesh.num_vertices)
    np.add.at(sums, mesh.triangles.ravel(), values.ravel())
    averages = sums / mesh.vertex_patch_sizes
    inner_v = mesh.interior_vertices
    coefficients[:len(inner_v)] = averages[inner_v]

    rule = quad_edge(9)
    traces = edge_traces(source, rule.points, mesh)
    means = np.einsum("eqd,ed,q->e", traces.average(1), mesh.normals, rule.weights)
    inner_e = np.flatnonzero(mesh.interior_edges)
    coefficients[len(inner_v):] = means[inner_e]
    return DiscreteField(morley, coefficients)


def _require_morley(field):
    if not isinstance(field, DiscreteField) or field.space != "morley":
        raise TransferError("input is not a Morley field")


def transfer_c0(field):
    """Lagrange transfer I_C of a Morley field into S²₀."""
    _require_morley(field)
    mesh = field.mesh
    return DiscreteField(build_space(mesh, "c0ip"), c0_transfer_matrix(mesh) @ field.coefficients)


def companion(field):
    """HCT companion J of a Morley field: conforming, with I_M J v = v."""
    _require_morley(field)
    mesh = field.mesh
    return DiscreteField(build_space(mesh, "hct"), companion_matrix(mesh) @ field.coefficients)


def smoother(field):
    """J_h = J o I_M of any discrete field."""
    if not isinstance(field, DiscreteField):
        raise TransferError("smoother expects a discrete field")
    return DiscreteField(build_space(field.mesh, "hct"), smoother_matrix(field.dofmap) @ field.coefficients)


def to_broken(field):
    """The same piecewise quadratic re-expressed in the discontinuous P2 space."""
    if field.space == "dg":
        return field
    return DiscreteField(build_space(field.mesh, "dg"), broken_matrix(field.dofmap) @ field.coefficients)


# ---------------------------------------------------------------------- #
# diagnostics
# ---------------------------------------------------------------------- #
@dataclass
class OperatorReport:
    chain: tuple
    input_space: str
    output_space: str
    distance_h: float
    output_energy: float


def hessian_inner(v, w=None, degree=2):
    """Piecewise energy product a_pw(v, w) of two fields on the same mesh."""
    w = v if w is None else w
    mesh = v.mesh
    rule = quad_macro(degree)
    tris = np.arange(mesh.num_triangles)
    _, _, hv = v.evaluate(tris, rule.points, rule.sub)
    hw = hv if w is v else w.evaluate(tris, rule.points, rule.sub)[2]
    per = np.einsum("tqab,tqab,q->t", hv, hw, rule.weights) * 2.0 * mesh.areas
    return float(per.sum())


def h_distance(v, w):
    """‖v - w‖_h for two fields of possibly different spaces on one mesh."""
    if v.mesh is not w.mesh:
        raise TransferError("fields are on different meshes")
    energy = hessian_inner(v) - 2.0 * hessian_inner(v, w) + hessian_inner(w)
    jumps = jh_functionals(v) - jh_functionals(w)
    return float(np.sqrt(max(energy, 0.0) + np.sum(jumps ** 2)))


def operator_report(field, output, chain):
    """Distance ‖v - Tv‖_h and |||Tv|||_pw for a transfer chain applied to ``field``."""
    report = OperatorReport(
        chain=tuple(chain),
        input_space=field.space,
        output_space=output.space,
        distance_h=h_distance(field, output),
        output_energy=float(np.sqrt(max(hessian_inner(output), 0.0))),
    )
    logger.debug("operator %s: distance %.3e", "->".join(report.chain), report.distance_h)
    return report
