from __future__ import annotations

from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq
from scipy.sparse.linalg import spsolve

from hho_afem import error, util
from hho_afem.abstract.hho_object import HHOObject
from hho_afem.fem.bases import (
    cell_basis,
    l2_project_cell,
    lagrange_basis,
    reference_edge_points,
)
from hho_afem.fem.hho import (
    EnergyFunctional,
    FidelityTerm,
    GradientField,
    HHOFunction,
    HHOSpace,
    reconstruct_gradient,
)
from hho_afem.fem.mesh import Mesh
from hho_afem.fem.quadrature import quad_rule_triangle


class StressField(GradientField):
    """Discrete stress ``σ_h = Π_Σ DW(R u_h)``."""

    pass


class BoundReport(HHOObject):
    _object_type = "bound_report"
    _fields = (
        "energy",
        "dual_energy",
        "oscillation",
        "leb_constant",
        "leb",
        "rhs",
        "gap",
        "rhs_terms",
        "indicators",
        "equilibrium_residual",
        "max_normal_jump",
    )
    _required_fields = ("energy", "dual_energy", "leb")


def _lp_norm_from_values(space: HHOSpace, values: np.ndarray, p: float) -> float:
    return float(np.sum(space.integrate(np.abs(values) ** p)) ** (1.0 / p))


def _projection_values(space: HHOSpace, data_q: np.ndarray, degree: int) -> np.ndarray:
    """Π^degree of data given at the space's quadrature points."""
    phi = space.phi_q if degree == space.k else l2_basis_values(space, degree)
    coefficients = np.einsum("q,cq,qi->ci", space.weights, data_q, phi)
    return coefficients @ phi.T


def l2_basis_values(space: HHOSpace, degree: int) -> np.ndarray:
    return cell_basis(degree).values(space.rule.reference_points)


def discrete_stress(space: HHOSpace, density, u_h: HHOFunction) -> StressField:
    """RT projection of ``DW(R u_h)`` with the energy quadrature rule."""
    functional = EnergyFunctional(space, density, None)
    r_q = reconstruct_gradient(space, u_h).values()
    return StressField(space, space.solve_mass(functional.stress_load(r_q)))


def equilibrium_residual(
    stress: StressField,
    f,
    *,
    p_conjugate: float = 2.0,
    u_h: Optional[HHOFunction] = None,
    fidelity: Optional[FidelityTerm] = None,
) -> float:
    """``‖div σ_h + Π f − 2α(u_T − Π g)‖_{L^{p'}}``; the α term only with fidelity."""
    space = stress.space
    residual = stress.divergence() + _projection_values(space, space.evaluate(f), space.k)
    if fidelity is not None:
        if u_h is None:
            raise error.ConfigurationError("equilibrium with fidelity needs u_h")
        g_proj = _projection_values(space, space.evaluate(fidelity.g), space.k)
        u_q = space.cell_values_at_quadrature(u_h)
        residual = residual - 2.0 * fidelity.alpha * (u_q - g_proj)
    return _lp_norm_from_values(space, residual, p_conjugate)


def _edge_stack(field: GradientField) -> np.ndarray:
    return np.stack([field.edge_values(j) for j in range(3)])  # (3, nT, nq, 2)


def _local_edge_index(mesh: Mesh, cells: np.ndarray, sides: np.ndarray) -> np.ndarray:
    return np.argmax(mesh.cell_sides[cells] == sides[:, None], axis=1)


def _global_order(values: np.ndarray, flipped: np.ndarray) -> np.ndarray:
    # the edge rule is symmetric, so reversing the points flips the direction
    return np.where(flipped[:, None, None], values[:, ::-1, :], values)


def normal_jumps(stress: GradientField) -> np.ndarray:
    """``‖[σ·ν_F]‖_{L²(F)}`` on every interior side."""
    space = stress.space
    mesh = space.mesh
    interior = mesh.interior_sides
    plus, minus = mesh.side_cells[interior, 0], mesh.side_cells[interior, 1]
    j_plus = _local_edge_index(mesh, plus, interior)
    j_minus = _local_edge_index(mesh, minus, interior)

    edges = _edge_stack(stress)
    v_plus = _global_order(edges[j_plus, plus], mesh.cell_side_flip[plus, j_plus])
    v_minus = _global_order(edges[j_minus, minus], mesh.cell_side_flip[minus, j_minus])

    normal = mesh.side_normals[interior]
    jump = np.einsum("fqi,fi->fq", v_plus - v_minus, normal)
    return np.sqrt(mesh.side_lengths[interior] * (jump**2 @ space.edge_weights))


def dual_energy(density, stress: GradientField) -> float:
    """``E*(σ) = −∫ W*(σ)`` with the space's quadrature rule."""
    space = stress.space
    return float(-np.sum(space.integrate(density.Wstar(stress.values()))))


def dual_energy_twowell(
    density,
    stress: GradientField,
    *,
    g,
    u_D,
    f,
    alpha: Optional[float],
) -> float:
    """Dual energy of the problem with quadratic term ``α‖g − v‖²``.

    ``−∫ (W*(σ) + g (div σ + Π f)) + ∫_∂Ω u_D σ·ν − ‖div σ + Π f‖² / (4α)``.
    """
    if g is None or alpha is None:
        raise error.ConfigurationError("two-well dual energy needs g and alpha")
    util.validate_range("alpha", alpha, lower=0.0, lower_inclusive=False)

    space = stress.space
    mesh = space.mesh
    div_q = stress.divergence() + _projection_values(space, space.evaluate(f), space.k)
    g_q = space.evaluate(g)

    volume = space.integrate(density.Wstar(stress.values()) + g_q * div_q)
    quadratic = space.integrate(div_q**2) / (4.0 * alpha)

    boundary = mesh.boundary_sides
    cells = mesh.side_cells[boundary, 0]
    local = _local_edge_index(mesh, cells, boundary)
    edges = _edge_stack(stress)
    sigma = edges[local, cells]  # local edge direction
    s = space.edge_s
    points = _edge_points(mesh, cells, local, s)
    u_d = util.evaluate_field(u_D, points[..., 0], points[..., 1])
    flux = np.einsum("fqi,fi->fq", sigma, mesh.side_normals[boundary])
    boundary_term = np.sum(mesh.side_lengths[boundary] * ((u_d * flux) @ space.edge_weights))

    return float(-np.sum(volume) + boundary_term - np.sum(quadratic))


def _edge_points(mesh: Mesh, cells: np.ndarray, local: np.ndarray, s: np.ndarray) -> np.ndarray:
    reference = np.stack([reference_edge_points(j, s) for j in range(3)])[local]
    origin = mesh.vertices[mesh.triangles[cells, 0]]
    return origin[:, None, :] + np.einsum("cij,cqj->cqi", mesh.jacobians[cells], reference)


def oscillation(
    f,
    mesh: Mesh,
    degree: int,
    *,
    exponent: float = 2.0,
    h_power: float = 1.0,
    quadrature_degree: Optional[int] = None,
) -> float:
    """``‖h_T^m (1 − Π^ℓ) f‖_{L^q}`` with ``m = h_power`` and ``q = exponent``."""
    rule = quad_rule_triangle(quadrature_degree or min(2 * degree + 8, 20))
    residual = _projection_residual(f, mesh, degree, rule)
    weight = mesh.diameters[:, None] ** h_power
    integrand = np.abs(weight * residual) ** exponent
    return float(np.sum(mesh.areas * (integrand @ rule.weights)) ** (1.0 / exponent))


def _projection_residual(f, mesh: Mesh, degree: int, rule) -> np.ndarray:
    x = mesh.map_to_physical(rule.reference_points)
    values = util.evaluate_field(f, x[..., 0], x[..., 1])
    coefficients = l2_project_cell(mesh, f, degree, quadrature_degree=rule.degree)
    return values - coefficients @ cell_basis(degree).values(rule.reference_points).T


def lp_norm(mesh: Mesh, f, p: float, *, quadrature_degree: int = 12) -> float:
    rule = quad_rule_triangle(quadrature_degree)
    x = mesh.map_to_physical(rule.reference_points)
    values = util.evaluate_field(f, x[..., 0], x[..., 1])
    return float(np.sum(mesh.areas * (np.abs(values) ** p @ rule.weights)) ** (1.0 / p))


def leb_constant(
    density,
    *,
    f_norm: float,
    area: float,
    poincare_constant: float,
    energy_at_zero: Optional[float] = None,
) -> float:
    """Returns ``C_P c₁₀`` with ``c₁₀`` the largest root of
    ``c₁ x^p − C_P ‖f‖_{L^{p'}} x − c₄|Ω| − E(0)``.

    A negative offset without a root gives the minimizer of the polynomial.

    Parameters
    ----------
    density
        Density providing ``params`` and ``W``.
    f_norm
        ``‖f‖_{L^{p'}(Ω)}``.
    area
        ``|Ω|``.
    poincare_constant
        ``C_P``.
    energy_at_zero
        ``E(0)``; defaults to ``W(0)|Ω|``.
    """
    params = density.params
    if energy_at_zero is None:
        energy_at_zero = float(density.W(np.zeros(2))) * area
    linear = poincare_constant * f_norm
    constant = params.c4 * area + energy_at_zero

    def fn(x):
        return params.c1 * x**params.p - linear * x - constant

    if linear == 0.0:
        return poincare_constant * max(constant / params.c1, 0.0) ** (1.0 / params.p)
    if constant <= 0.0:
        # the largest root lies between the minimizer of fn and the root of c₁x^{p−1} = C_P‖f‖
        upper = (linear / params.c1) ** (1.0 / (params.p - 1.0))
        if constant == 0.0:
            return poincare_constant * upper
        lower = (linear / (params.p * params.c1)) ** (1.0 / (params.p - 1.0))
        if fn(lower) >= 0.0:
            return poincare_constant * lower
        return poincare_constant * brentq(fn, lower, upper, xtol=1e-15, rtol=1e-14, maxiter=500)

    upper = 1.0
    for _ in range(200):
        if fn(upper) > 0.0:
            break
        upper *= 2.0
    else:
        raise error.ConvergenceError("could not bracket the energy bound root")

    root = brentq(fn, 0.0, upper, xtol=1e-15, rtol=1e-14, maxiter=500)
    return poincare_constant * root


def lower_energy_bound(dual: float, constant: float, osc: float) -> float:
    return dual - constant * osc


class ConformingPostprocess:
    """Weighted least-squares fit ``v_C ∈ S^{k+1}`` of a piecewise gradient.

    Minimizes ``Σ_T |T|^{(2−p)/p} ‖G − ∇v_C‖²_{L²(T)}`` with ``v_C`` equal to
    the nodal interpolant of ``dirichlet`` (zero by default) on ∂Ω.
    """

    def __init__(self, space: HHOSpace, target: GradientField, *, p: float, dirichlet=None):
        self.space = space
        mesh = space.mesh
        self.degree = space.k + 1
        basis = lagrange_basis(self.degree)
        self.weights_T = mesh.areas ** ((2.0 - p) / p)

        self._init_numbering(basis)

        inverse = np.linalg.inv(mesh.jacobians)
        grads = np.einsum("qki,cij->cqkj", basis.gradients(space.rule.reference_points), inverse)
        self.basis_gradients = grads
        scale = self.weights_T * mesh.areas
        target_q = target.values()
        stiffness = np.einsum("c,q,cqki,cqli->ckl", scale, space.weights, grads, grads)
        load = np.einsum("c,q,cqi,cqki->ck", scale, space.weights, target_q, grads)

        n = self.n_nodes
        rows = np.repeat(self.cell_nodes, basis.dim, axis=1).ravel()
        cols = np.tile(self.cell_nodes, (1, basis.dim)).ravel()
        matrix = sp.csr_matrix((stiffness.ravel(), (rows, cols)), shape=(n, n))
        rhs = np.bincount(self.cell_nodes.ravel(), weights=load.ravel(), minlength=n)

        values = np.zeros(n)
        if dirichlet is not None:
            nodes = self.node_coordinates[self.boundary_nodes]
            values[self.boundary_nodes] = util.evaluate_field(dirichlet, nodes[:, 0], nodes[:, 1])

        free = np.ones(n, dtype=bool)
        free[self.boundary_nodes] = False
        if free.any():
            a_ff = matrix[free][:, free].tocsc()
            rhs_f = rhs[free] - matrix[free][:, ~free] @ values[~free]
            values[free] = np.atleast_1d(spsolve(a_ff, rhs_f))

        self.coefficients = values
        self.gradient_values = np.einsum("cqki,ck->cqi", grads, values[self.cell_nodes])
        self.misfit = target_q - self.gradient_values

    def _init_numbering(self, basis) -> None:
        mesh = self.space.mesh
        m = self.degree
        n_edge = m - 1
        n_v, n_s, n_t = mesh.n_vertices, mesh.n_sides, mesh.n_cells

        columns = [mesh.triangles]
        for j in range(3):
            t = np.arange(n_edge)
            order = np.where(mesh.cell_side_flip[:, j, None], n_edge - 1 - t, t)
            columns.append(n_v + mesh.cell_sides[:, j, None] * n_edge + order)
        offset = n_v + n_s * n_edge
        columns.append(
            offset
            + np.arange(n_t)[:, None] * basis.n_interior_nodes
            + np.arange(basis.n_interior_nodes)
        )
        self.cell_nodes = np.concatenate(columns, axis=1).astype(np.int64)
        self.n_nodes = offset + n_t * basis.n_interior_nodes

        coordinates = np.zeros((self.n_nodes, 2))
        coordinates[self.cell_nodes] = mesh.map_to_physical(basis.nodes)
        self.node_coordinates = coordinates

        boundary = mesh.boundary_sides
        edge_nodes = (n_v + boundary[:, None] * n_edge + np.arange(n_edge)).ravel()
        self.boundary_nodes = np.unique(np.concatenate([mesh.boundary_vertices, edge_nodes]))

    def cell_misfit_l2_squared(self) -> np.ndarray:
        return self.space.integrate(np.einsum("cqi,cqi->cq", self.misfit, self.misfit))

    def misfit_lp(self, p: float) -> float:
        return _lp_norm_from_values(self.space, np.linalg.norm(self.misfit, axis=2), p)

    def objective(self) -> float:
        return float(np.sum(self.weights_T * self.cell_misfit_l2_squared()))


def postprocess_conforming(
    space: HHOSpace, u_h: HHOFunction, *, p: float, dirichlet=None
) -> ConformingPostprocess:
    return ConformingPostprocess(
        space, reconstruct_gradient(space, u_h), p=p, dirichlet=dirichlet
    )


def rhs_estimate(
    *,
    energy: float,
    dual: float,
    osc: float,
    postprocess: ConformingPostprocess,
    params,
    extra: float = 0.0,
) -> HHOObject:
    """``E_h − E* + osc + ‖R u_h − ∇v_C‖^{r'}_{L^p}`` (plus ``extra``)."""
    misfit = postprocess.misfit_lp(params.p) ** params.r_conjugate
    terms = {
        "gap": energy - dual,
        "osc": osc,
        "conformity": misfit,
        "extra": extra,
    }
    return HHOObject(value=float(sum(terms.values())), terms=terms)


def refinement_indicators(
    space: HHOSpace,
    density,
    f,
    u_h: HHOFunction,
    stress: GradientField,
    postprocess: ConformingPostprocess,
) -> np.ndarray:
    """Per-cell ``η(T)``: stress misfit, weighted data oscillation, conformity."""
    mesh = space.mesh
    q = density.params.p_conjugate
    p = density.params.p

    r_q = reconstruct_gradient(space, u_h).values()
    misfit = np.linalg.norm(stress.values() - density.DW(r_q), axis=2)
    stress_term = space.integrate(misfit**q)

    f_q = space.evaluate(f)
    residual = f_q - _projection_values(space, f_q, space.k)
    data_term = mesh.areas ** (q / 2.0) * space.integrate(np.abs(residual) ** q)

    conformity = mesh.areas ** ((2.0 - p) / p) * postprocess.cell_misfit_l2_squared()
    return np.maximum(stress_term + data_term + conformity, 0.0)


def stress_error(stress: GradientField, sigma_exact: Callable, p_conjugate: float) -> float:
    space = stress.space
    diff = stress.values() - space.evaluate(sigma_exact, components=2)
    return _lp_norm_from_values(space, np.linalg.norm(diff, axis=2), p_conjugate)


def grad_error(gradient: GradientField, grad_exact: Callable, p: float) -> float:
    space = gradient.space
    diff = gradient.values() - space.evaluate(grad_exact, components=2)
    return _lp_norm_from_values(space, np.linalg.norm(diff, axis=2), p)


def l2_error(space: HHOSpace, u_h: HHOFunction, u_exact: Callable) -> float:
    diff = space.cell_values_at_quadrature(u_h) - space.evaluate(u_exact)
    return _lp_norm_from_values(space, diff, 2.0)


def microstructure_fractions(space: HHOSpace, density, u_h: HHOFunction) -> np.ndarray:
    """``Λ(|Π⁰ R u_h|)`` per cell for the optimal design density."""
    if not hasattr(density, "volume_fraction"):
        raise error.ValidationError("volume fraction is defined for optimal design only")

    means = reconstruct_gradient(space, u_h).mean_values()
    return density.volume_fraction(np.linalg.norm(means, axis=1))
