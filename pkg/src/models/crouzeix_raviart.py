"""
Crouzeix-Raviart discretization of the Poisson model problem -Δu = f, u = 0 on ∂Ω.

Serves as the second-order demonstration of residual control without jump
terms: ‖h_T f‖ bounds the dual norm of the residual with the interpolation
constant κ_CR ≤ 0.2983.
"""

import logging
import time

import numpy as np
from scipy import sparse

from src.models.adapt import LevelRecord, StudyRecord
from src.models.assembly import LinearSystem, solve_linear
from src.models.basisquad import quad_edge, quad_triangle
from src.models.mesh import refine_uniform, unit_square
from src.models.spaces import ClosedForm, DiscreteField, build_space, edge_traces

logger = logging.getLogger(__name__)

KAPPA_CR = 0.2983


def poisson_value(x, y):
    return x * (1 - x) * y * (1 - y)


def poisson_gradient(x, y):
    return np.stack([(1 - 2 * x) * y * (1 - y), x * (1 - x) * (1 - 2 * y)], axis=-1)


def poisson_load(x, y):
    return 2.0 * (x * (1 - x) + y * (1 - y))


def poisson_exact():
    hessian = lambda x, y: np.stack([
        np.stack([-2 * y * (1 - y), (1 - 2 * x) * (1 - 2 * y)], axis=-1),
        np.stack([(1 - 2 * x) * (1 - 2 * y), -2 * x * (1 - x)], axis=-1),
    ], axis=-2)
    return ClosedForm(poisson_value, poisson_gradient, hessian)


def cr_solve(mesh, f):
    """Discrete solution u_CR with a_pw(u_CR, v) = (f, v) for all v in CR¹₀."""
    dm = build_space(mesh, "cr")
    tris = np.arange(mesh.num_triangles)
    _, grads, _ = dm.basis.evaluate(tris, np.full((1, 3), 1.0 / 3.0))
    local = np.einsum("tid,tjd->tij", grads[:, 0], grads[:, 0]) * mesh.areas[:, None, None]
    matrix = dm.scatter_matrix(local, dm.cell_dofs, dm.cell_dofs)

    rule = quad_triangle(6)
    values, _, _ = dm.basis.evaluate(tris, rule.points)
    xy = mesh.to_physical(tris, rule.points)
    load = np.asarray(f(xy[..., 0], xy[..., 1]), dtype=float) * np.ones(xy.shape[:-1])
    weights = rule.weights[None, :] * 2.0 * mesh.areas[:, None]
    rhs = dm.scatter_vector(np.einsum("tq,tqi->ti", load * weights, values))
    if dm.ndof == 0:
        return DiscreteField(dm, np.zeros(0))
    return DiscreteField(dm, solve_linear(LinearSystem(sparse.csr_matrix(matrix), rhs, True, dm)))


def cr_interpolate(v, mesh):
    """I_CR v: the CR function with the edge means of the closed-form ``v``."""
    dm = build_space(mesh, "cr")
    rule = quad_edge(8)
    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    xy = a[:, None, :] + rule.points[None, :, None] * (b - a)[:, None, :]
    means = v.value(xy[..., 0], xy[..., 1]) @ rule.weights
    inner = np.flatnonzero(mesh.interior_edges)
    return DiscreteField(dm, means[inner])


def energy_error_h1(u_cr, exact, degree=8):
    """‖∇_pw(u - u_CR)‖."""
    mesh = u_cr.mesh
    rule = quad_triangle(degree)
    tris = np.arange(mesh.num_triangles)
    xy = mesh.to_physical(tris, rule.points)
    _, grads, _ = u_cr.evaluate(tris, rule.points)
    diff = exact.gradient(xy[..., 0], xy[..., 1]) - grads
    weights = rule.weights[None, :] * 2.0 * mesh.areas[:, None]
    return float(np.sqrt(np.sum(weights * np.sum(diff ** 2, axis=-1))))


def weighted_load(mesh, f, degree=8):
    """Elementwise ‖h_T f‖²_{L²(T)}."""
    rule = quad_triangle(degree)
    tris = np.arange(mesh.num_triangles)
    xy = mesh.to_physical(tris, rule.points)
    values = np.asarray(f(xy[..., 0], xy[..., 1]), dtype=float) * np.ones(xy.shape[:-1])
    weights = rule.weights[None, :] * 2.0 * mesh.areas[:, None]
    return mesh.diameters ** 2 * np.sum(weights * values ** 2, axis=1)


def normal_jumps(u_cr):
    """h_E ‖[∇u_CR]·ν_E‖²_{L²(E)} on interior edges, zero on the boundary."""
    mesh = u_cr.mesh
    traces = edge_traces(u_cr, np.array([0.5]))
    jump = np.einsum("ed,ed->e", traces.jump(1)[:, 0], mesh.normals)
    values = mesh.edge_lengths ** 2 * jump ** 2
    values[mesh.boundary_edges] = 0.0
    return values


def jump_bound_constant(u_cr, f):
    """max over interior edges of h_E^½ ‖[∇u_CR]·ν_E‖ / ‖h_T f‖_{ω(E)}."""
    mesh = u_cr.mesh
    local = weighted_load(mesh, f)
    inner = np.flatnonzero(mesh.interior_edges)
    patch = local[mesh.edge_triangles[inner, 0]] + local[mesh.edge_triangles[inner, 1]]
    jumps = normal_jumps(u_cr)[inner]
    ratio = np.where(patch > 0.0, np.sqrt(jumps / np.where(patch > 0.0, patch, 1.0)), 0.0)
    return float(ratio.max(initial=0.0))


def interpolation_ratio(v, mesh, degree=10):
    """‖h_T⁻¹(v - I_CR v)‖ / ‖∇v‖ for a closed-form ``v`` vanishing on ∂Ω."""
    interpolant = cr_interpolate(v, mesh)
    rule = quad_triangle(degree)
    tris = np.arange(mesh.num_triangles)
    xy = mesh.to_physical(tris, rule.points)
    values, _, _ = interpolant.evaluate(tris, rule.points)
    weights = rule.weights[None, :] * 2.0 * mesh.areas[:, None]
    diff = v.value(xy[..., 0], xy[..., 1]) - values
    numerator = np.sum(weights * diff ** 2 / mesh.diameters[:, None] ** 2)
    denominator = np.sum(weights * np.sum(v.gradient(xy[..., 0], xy[..., 1]) ** 2, axis=-1))
    return float(np.sqrt(numerator / denominator))


def cr_poisson_demo(levels=4, mesh=None, f=poisson_load, exact=None):
    """
    Uniform study of the CR scheme.

    Per level: estA = ‖h_T f‖, estB = the classical bound ‖h_T f‖ plus normal
    jumps, est_theorem = κ_CR ‖h_T f‖; totals["jump_bound_constant"] is the
    edgewise constant of the jump-free bound.
    """
    mesh = unit_square(2) if mesh is None else mesh
    exact = poisson_exact() if exact is None and f is poisson_load else exact
    record = StudyRecord("cr", "uniform")
    for level in range(levels):
        if level:
            mesh = refine_uniform(mesh)
        start = time.perf_counter()
        u_cr = cr_solve(mesh, f)
        hf = float(np.sqrt(weighted_load(mesh, f).sum()))
        jumps = float(np.sqrt(normal_jumps(u_cr).sum()))
        err = energy_error_h1(u_cr, exact) if exact is not None else None
        bound = KAPPA_CR * hf
        row = LevelRecord(
            level=level, ndof=u_cr.dofmap.ndof, hmax=mesh.hmax, err_energy=err,
            estA=hf, estB=float(np.sqrt(hf ** 2 + jumps ** 2)), est_theorem=bound, osc=0.0, apx=0.0,
            eff_index=bound / err if err else None, wall_time=time.perf_counter() - start,
            num_triangles=mesh.num_triangles,
            totals={"h_f": hf, "normal_jumps": jumps, "jump_bound_constant": jump_bound_constant(u_cr, f)},
        )
        logger.info("CR level %d: ndof=%d error=%s", level, row.ndof, err)
        record.append(row, u_cr)
    return record
