"""
A posteriori quantities for discrete plate solutions.

Per-entity values are stored squared; totals are the square roots of their
sums.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict

import numpy as np
import pandas as pd

from src.models.basisquad import quad_edge, quad_macro, quad_triangle
from src.models.errors import DataAssumptionError, SourceError
from src.models.sources import PiecewisePolynomial, edge_points, density_values
from src.models.spaces import DiscreteField, edge_traces, evaluate_piecewise, jh_edge_terms, jh_product

logger = logging.getLogger(__name__)


@dataclass
class EstimatorReport:
    """
    Squared indicator parts per element and per edge plus named totals.

    Attributes:
        elements: name -> (nt,) squared contributions
        edges: name -> (ne,) squared contributions
        totals: name -> estimator value (square root of the summed squares)
        primary: key of the total the theorem in use reports
    """

    elements: Dict[str, np.ndarray] = field(default_factory=dict)
    edges: Dict[str, np.ndarray] = field(default_factory=dict)
    totals: Dict[str, float] = field(default_factory=dict)
    primary: str = ""

    def squared(self, *names):
        """Sum of the squared parts called ``names`` over all entities."""
        out = 0.0
        for name in names:
            if name in self.elements:
                out += float(self.elements[name].sum())
            elif name in self.edges:
                out += float(self.edges[name].sum())
            else:
                raise KeyError(name)
        return out

    def add_total(self, name, *parts):
        self.totals[name] = float(np.sqrt(self.squared(*parts)))
        return self.totals[name]

    def merge(self, other):
        self.elements.update(other.elements)
        self.edges.update(other.edges)
        self.totals.update(other.totals)
        return self

    def element_indicators(self, names, mesh):
        """Squared per-element indicators; edge parts are split evenly between adjacent triangles."""
        out = np.zeros(mesh.num_triangles)
        for name in names:
            if name in self.elements:
                out += self.elements[name]
            else:
                out += edge_to_elements(mesh, self.edges[name])
        return out

    def to_frame(self):
        rows = [{"estimator_name": k, "total": v} for k, v in self.totals.items()]
        return pd.DataFrame(rows, columns=["estimator_name", "total"])


def edge_to_elements(mesh, values):
    """Distribute per-edge values equally to the one or two adjacent triangles."""
    values = np.asarray(values, dtype=float)
    out = np.zeros(mesh.num_triangles)
    inner = mesh.interior_edges
    share = np.where(inner, 0.5, 1.0) * values
    np.add.at(out, mesh.edge_triangles[:, 0], share)
    np.add.at(out, mesh.edge_triangles[inner, 1], share[inner])
    return out


def _edge_integral(mesh, integrand, rule):
    """∫_E of per-point values (ne, nq)."""
    return mesh.edge_lengths * (integrand @ rule.weights)


# ---------------------------------------------------------------------- #
# jump families
# ---------------------------------------------------------------------- #
def jump_estimator_A(u_h):
    """Σ_E h_E ‖[D²_pw u_h]_E τ_E‖² plus the j_h edge terms."""
    mesh = u_h.mesh
    rule = quad_edge(4)
    traces = edge_traces(u_h, rule.points)
    jump = np.einsum("eqab,eb->eqa", traces.jump(2), mesh.tangents)
    hess_tau = mesh.edge_lengths * _edge_integral(mesh, np.sum(jump ** 2, axis=-1), rule)
    report = EstimatorReport(edges={"hessian_tangential_jump": hess_tau, "jh": jh_edge_terms(u_h)})
    report.add_total("A", "hessian_tangential_jump", "jh")
    return report


def jump_estimator_B(u_h):
    """Σ_E h_E⁻³ ‖[u_h]_E‖² + h_E⁻¹ ‖[∂u_h/∂ν_E]_E‖², boundary edges included."""
    mesh = u_h.mesh
    rule = quad_edge(6)
    traces = edge_traces(u_h, rule.points)
    h = mesh.edge_lengths
    value = _edge_integral(mesh, traces.jump(0) ** 2, rule) / h ** 3
    normal = np.einsum("eqd,ed->eq", traces.jump(1), mesh.normals)
    normal = _edge_integral(mesh, normal ** 2, rule) / h
    report = EstimatorReport(edges={"value_jump": value, "normal_jump": normal})
    report.add_total("B", "value_jump", "normal_jump")
    return report


def nn_jump_estimator(u_h):
    """Σ over interior edges of h_E ‖[∂²u_h/∂ν_E²]_E‖²."""
    mesh = u_h.mesh
    rule = quad_edge(4)
    traces = edge_traces(u_h, rule.points)
    nn = np.einsum("eqab,ea,eb->eq", traces.jump(2), mesh.normals, mesh.normals)
    values = mesh.edge_lengths * _edge_integral(mesh, nn ** 2, rule)
    values[mesh.boundary_edges] = 0.0
    report = EstimatorReport(edges={"nn_jump": values})
    report.add_total("nn", "nn_jump")
    return report


# ---------------------------------------------------------------------- #
# volume terms
# ---------------------------------------------------------------------- #
def volume_and_osc(f, mesh, degree=2):
    """
    Elementwise ‖h_T² f‖² and osc² = ‖h_T² (f - Π_k f)‖² with the L² projection Π_k.

    ``f`` may be a callable, a PiecewisePolynomial or None (zero).
    """
    if f is None:
        zeros = np.zeros(mesh.num_triangles)
        report = EstimatorReport(elements={"volume": zeros, "osc": zeros.copy()})
    else:
        rule = quad_triangle(10)
        tris = np.arange(mesh.num_triangles)
        xy = mesh.to_physical(tris, rule.points)
        values = density_values(f, mesh, tris, xy)
        projected = PiecewisePolynomial.project(
            mesh, lambda x, y: density_values(f, mesh, tris, np.stack([x, y], axis=-1)), degree, rule)
        h4 = mesh.diameters ** 4
        weights = rule.weights[None, :] * 2.0 * mesh.areas[:, None]
        volume = h4 * np.sum(weights * values ** 2, axis=1)
        osc = h4 * np.sum(weights * (values - projected.evaluate(tris, xy)) ** 2, axis=1)
        report = EstimatorReport(elements={"volume": volume, "osc": osc})
    report.add_total("volume", "volume")
    report.add_total("osc", "osc")
    return report


# ---------------------------------------------------------------------- #
# general sources
# ---------------------------------------------------------------------- #
def _data(approx, alpha):
    poly = approx.component(alpha)
    return PiecewisePolynomial.zeros(approx.mesh) if poly is None else poly


def _second_order_matrix(approx):
    """Entries (F₂)_xx, (F₂)_xy, (F₂)_yy with the halved mixed entry."""
    return _data(approx, (2, 0)), 0.5 * _data(approx, (1, 1)), _data(approx, (0, 2))


def general_mu(mesh, approx, u_h=None, scheme="morley"):
    """
    Residual estimator μ for polynomial load data (F_α, G_0, G_1).

    μ₁ per element, μ₂ and μ₃ per interior edge; the μ₃ branch with the
    discrete Hessian jump is used for the C⁰ interior penalty scheme and the
    mean-free branch otherwise. The other branch is reported as ``mu3_alt``.
    """
    if approx.mesh is not mesh:
        raise SourceError("approximation data live on a different mesh")
    f0 = _data(approx, (0, 0))
    f1 = (_data(approx, (1, 0)), _data(approx, (0, 1)))
    s_xx, s_xy, s_yy = _second_order_matrix(approx)

    # mu_1: h_T^4 ‖F0 - div F1 + div² F2‖²
    rule = quad_triangle(8)
    tris = np.arange(mesh.num_triangles)
    xy = mesh.to_physical(tris, rule.points)
    residual = (f0.evaluate(tris, xy)
                - f1[0].derivative(0).evaluate(tris, xy) - f1[1].derivative(1).evaluate(tris, xy)
                + s_xx.derivative(0).derivative(0).evaluate(tris, xy)
                + 2.0 * s_xy.derivative(0).derivative(1).evaluate(tris, xy)
                + s_yy.derivative(1).derivative(1).evaluate(tris, xy))
    weights = rule.weights[None, :] * 2.0 * mesh.areas[:, None]
    mu1 = mesh.diameters ** 4 * np.sum(weights * residual ** 2, axis=1)

    # edge terms on interior edges
    erule = quad_edge(9)
    inner = np.flatnonzero(mesh.interior_edges)
    h = mesh.edge_lengths
    nu, tau = mesh.normals, mesh.tangents
    mu2 = np.zeros(mesh.num_edges)
    mu3 = np.zeros(mesh.num_edges)
    mu3_alt = np.zeros(mesh.num_edges)
    if len(inner):
        exy = edge_points(mesh, inner, erule.points)
        n, t = nu[inner][:, None, :], tau[inner][:, None, :]

        def normal_flux(side):
            tri = mesh.edge_triangles[inner, side]
            ev = lambda p: p.evaluate(tri, exy)
            dx, dy = (lambda p: p.derivative(0)), (lambda p: p.derivative(1))
            div_x = ev(dx(s_xx)) + ev(dy(s_xy))
            div_y = ev(dx(s_xy)) + ev(dy(s_yy))
            vec_x = ev(f1[0]) - div_x
            vec_y = ev(f1[1]) - div_y
            # ∂(F₂τ)/∂s = (τ·∇)F₂ τ
            d_xx = t[..., 0] * ev(dx(s_xx)) + t[..., 1] * ev(dy(s_xx))
            d_xy = t[..., 0] * ev(dx(s_xy)) + t[..., 1] * ev(dy(s_xy))
            d_yy = t[..., 0] * ev(dx(s_yy)) + t[..., 1] * ev(dy(s_yy))
            vec_x = vec_x - (d_xx * t[..., 0] + d_xy * t[..., 1])
            vec_y = vec_y - (d_xy * t[..., 0] + d_yy * t[..., 1])
            flux = vec_x * n[..., 0] + vec_y * n[..., 1]
            moment = (ev(s_xx) * n[..., 0] ** 2 + 2.0 * ev(s_xy) * n[..., 0] * n[..., 1]
                      + ev(s_yy) * n[..., 1] ** 2)
            return flux, moment

        flux_p, moment_p = normal_flux(0)
        flux_m, moment_m = normal_flux(1)
        g0 = approx.edge[0].evaluate(erule.points)[inner] if 0 in approx.edge else 0.0
        g1 = approx.edge[1].evaluate(erule.points)[inner] if 1 in approx.edge else 0.0

        r2 = g0 + flux_p - flux_m
        mu2[inner] = h[inner] ** 3 * _edge_integral_subset(h[inner], r2 ** 2, erule)

        r3 = g1 + moment_p - moment_m
        mean = r3 @ erule.weights
        mean_free = h[inner] * h[inner] * ((r3 ** 2) @ erule.weights - mean ** 2)
        if u_h is not None:
            traces = edge_traces(u_h, erule.points)
            hess_nn = np.einsum("eqab,ea,eb->eq", traces.jump(2)[inner], nu[inner], nu[inner])
        else:
            hess_nn = 0.0
        discrete = h[inner] * _edge_integral_subset(h[inner], (r3 - hess_nn) ** 2, erule)
        if scheme == "c0ip":
            mu3[inner], mu3_alt[inner] = discrete, np.maximum(mean_free, 0.0)
        else:
            mu3[inner], mu3_alt[inner] = np.maximum(mean_free, 0.0), discrete

    report = EstimatorReport(elements={"mu1": mu1}, edges={"mu2": mu2, "mu3": mu3, "mu3_alt": mu3_alt})
    report.add_total("mu1", "mu1")
    report.add_total("mu2", "mu2")
    report.add_total("mu3", "mu3")
    report.add_total("mu", "mu1", "mu2", "mu3")
    report.primary = "mu"
    return report


def _edge_integral_subset(lengths, integrand, rule):
    return lengths * (integrand @ rule.weights)


def _line_density(source, mesh, order, rule):
    """Summed densities g_j at edge points (ne, nq) and the mask of edges in Γ_j."""
    values = np.zeros((mesh.num_edges, len(rule.points)))
    mask = np.zeros(mesh.num_edges, dtype=bool)
    for load in source.line_loads_of_order(order):
        edges = load.edges(mesh)
        if len(edges) == 0:
            continue
        xy = edge_points(mesh, edges, rule.points)
        values[edges] += np.asarray(load.density(xy[..., 0], xy[..., 1]), dtype=float) * np.ones(xy.shape[:-1])
        mask[edges] = True
    return values, mask


def apx_error(source, approx):
    """
    Data approximation error apx(F, T)² per element.

    Edge contributions of Γ_j are counted once for every adjacent triangle.
    """
    mesh = approx.mesh
    rule = quad_triangle(10)
    tris = np.arange(mesh.num_triangles)
    xy = mesh.to_physical(tris, rule.points)
    weights = rule.weights[None, :] * 2.0 * mesh.areas[:, None]
    out = np.zeros(mesh.num_triangles)
    for alpha in set(source.volume) | set(approx.volume):
        exact = density_values(source.volume[alpha], mesh, tris, xy) if alpha in source.volume else 0.0
        poly = approx.component(alpha)
        approximate = poly.evaluate(tris, xy) if poly is not None else 0.0
        power = 2 * (2 - sum(alpha))
        out += mesh.diameters ** power * np.sum(weights * (exact - approximate) ** 2 * np.ones(xy.shape[:-1]), axis=1)

    erule = quad_edge(9)
    h = mesh.edge_lengths
    for order in (0, 1):
        exact, mask = _line_density(source, mesh, order, erule)
        approximate = approx.edge[order].evaluate(erule.points) if order in approx.edge else 0.0
        per_edge = h ** (3 - 2 * order) * _edge_integral(mesh, (exact - approximate) ** 2, erule)
        per_edge = np.where(mask, per_edge, 0.0)
        np.add.at(out, mesh.edge_triangles[:, 0], per_edge)
        inner = mesh.interior_edges
        np.add.at(out, mesh.edge_triangles[inner, 1], per_edge[inner])

    report = EstimatorReport(elements={"apx": out})
    report.add_total("apx", "apx")
    return report


# ---------------------------------------------------------------------- #
# theorem totals
# ---------------------------------------------------------------------- #
def check_data_assumptions(approx, scheme, tol=1e-13):
    """
    Refuse unsmoothed general-source estimation outside its data class.

    Raises:
        DataAssumptionError: naming the violated assumption
    """
    if scheme == "c0ip":
        for alpha in ((2, 0), (1, 1), (0, 2)):
            poly = approx.component(alpha)
            if poly is not None and not poly.is_zero(tol):
                raise DataAssumptionError(
                    "second-order volume data must vanish for the C0 interior penalty scheme without smoother",
                    "zero-second-order-volume-data")
        if 1 in approx.edge and np.abs(approx.edge[1].coefficients).max(initial=0.0) > tol:
            raise DataAssumptionError(
                "moment line loads must vanish for the C0 interior penalty scheme without smoother",
                "zero-moment-line-load")
        return
    for alpha in ((1, 0), (0, 1)):
        poly = approx.component(alpha)
        if poly is not None and not poly.is_zero(tol):
            raise DataAssumptionError("first-order volume data must vanish without smoother",
                                      "zero-first-order-volume-data")
    for alpha in ((2, 0), (1, 1), (0, 2)):
        poly = approx.component(alpha)
        if poly is not None and not poly.is_constant():
            raise DataAssumptionError("second-order volume data must be piecewise constant without smoother",
                                      "piecewise-constant-second-order-data")


def scheme_total(u_h, source, config, approx=None, degree=2):
    """
    The a posteriori totals of the configured scheme for the discrete solution ``u_h``.

    L² loads give "l2_source/hessian_jumps", "l2_source/value_jumps" and, for the
    penalty schemes, "l2_source/penalty"; general loads give
    "general_source/hessian_jumps" and "general_source/value_jumps" including apx.
    With the smoother J_h an L² load gets both sets, F₀ being its projection,
    and the general-source total is the primary one.
    """
    mesh = u_h.mesh
    report = jump_estimator_A(u_h).merge(jump_estimator_B(u_h))
    c0ip = config.name == "c0ip"
    extra = ()
    if c0ip:
        report.merge(nn_jump_estimator(u_h))
        extra = ("nn_jump",)

    if source.is_l2:
        report.merge(volume_and_osc(source.volume.get((0, 0)), mesh, degree))
        report.add_total("l2_source/hessian_jumps", "volume", "hessian_tangential_jump", "jh", *extra)
        if c0ip:
            report.add_total("l2_source/value_jumps", "volume", "normal_jump", *extra)
        else:
            report.add_total("l2_source/value_jumps", "volume", "value_jump", "normal_jump")
        if config.name != "morley":
            report.edges["penalty"] = _penalty_per_edge(report, u_h, config)
            if config.name == "wopsip":
                report.add_total("l2_source/penalty", "volume", "value_jump", "normal_jump", "penalty")
            else:
                report.add_total("l2_source/penalty", "volume", "penalty", *extra)
        report.primary = "l2_source/hessian_jumps"
        if config.smoother == "identity":
            return report

    approx = source.approximate(mesh, degree) if approx is None else approx
    if config.smoother == "identity":
        try:
            check_data_assumptions(approx, config.name)
        except DataAssumptionError as exc:
            raise exc.with_stage("estimate")
    report.merge(general_mu(mesh, approx, u_h, config.name))
    report.merge(apx_error(source, approx))
    report.add_total("general_source/hessian_jumps", "mu1", "mu2", "mu3", "hessian_tangential_jump", "jh", "apx")
    report.add_total("general_source/value_jumps", "mu1", "mu2", "mu3", "value_jump", "normal_jump", "apx")
    report.primary = "general_source/hessian_jumps"
    return report


def _penalty_per_edge(report, u_h, config):
    """Edge contributions of the stabilization c_h(u_h, u_h)."""
    if config.name == "wopsip":
        return report.edges["jh"] / u_h.mesh.edge_lengths ** 2
    if config.name == "c0ip":
        return config.sigma_ip * report.edges["normal_jump"]
    return config.sigma1 * report.edges["value_jump"] + config.sigma2 * report.edges["normal_jump"]


def indicator_names(report):
    """Squared-part names that make up the primary total, for marking."""
    if report.primary.startswith("general_source"):
        return ["mu1", "mu2", "mu3", "hessian_tangential_jump", "jh", "apx"]
    names = ["volume", "hessian_tangential_jump", "jh"]
    if "nn_jump" in report.edges:
        names.append("nn_jump")
    return names


# ---------------------------------------------------------------------- #
# errors against closed-form solutions
# ---------------------------------------------------------------------- #
@dataclass
class EnergyError:
    pw: float
    h: float


def energy_error(u_h, exact, degree=10):
    """|||u - u_h|||_pw and ‖u - u_h‖_h for a ClosedForm ``exact`` with H²₀ boundary values."""
    mesh = u_h.mesh
    macro = isinstance(u_h, DiscreteField) and u_h.dofmap.kind == "HCT"
    rule = quad_macro(min(degree, 10)) if macro else quad_triangle(min(degree, 10))
    tris = np.arange(mesh.num_triangles)
    _, _, exact_hess = evaluate_piecewise(exact, mesh, tris, rule.points)
    _, _, discrete_hess = u_h.evaluate(tris, rule.points, rule.sub)
    weights = rule.weights[None, :] * 2.0 * mesh.areas[:, None]
    pw = float(np.sum(weights * np.sum((exact_hess - discrete_hess) ** 2, axis=(-1, -2))))
    jumps = jh_product(u_h)
    return EnergyError(float(np.sqrt(max(pw, 0.0))), float(np.sqrt(max(pw, 0.0) + max(jumps, 0.0))))
