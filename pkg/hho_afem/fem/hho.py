from __future__ import annotations

from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp

from hho_afem import error, util
from hho_afem.fem import settings
from hho_afem.fem.bases import (
    REFERENCE_AREA,
    REFERENCE_EDGE_LENGTHS,
    REFERENCE_NORMALS,
    cell_basis,
    edge_basis,
    l2_project_cell,
    l2_project_edge,
    piola_values,
    reference_edge_points,
    rt_basis,
    rt_mass_matrices,
)
from hho_afem.fem.mesh import Mesh
from hho_afem.fem.quadrature import quad_rule_edge, quad_rule_triangle

Field = Union[Callable, float, int, None]


class FidelityTerm:
    """Lower-order term ``α ‖g − v‖²`` added to the energy."""

    def __init__(self, g: Field, alpha: float = 0.5):
        util.validate_range("alpha", alpha, lower=0.0, lower_inclusive=False)
        self.g = g
        self.alpha = float(alpha)

    def __repr__(self):
        return f"FidelityTerm(alpha={self.alpha})"


class HHOSpace:
    """Unknowns ``(v_T, v_F) ∈ P_k(T) × P_k(F)`` on a mesh.

    The full coefficient vector lists all cell blocks, then one block per side
    including boundary sides. Degrees of freedom are the cell blocks and the
    interior side blocks; boundary side blocks are fixed to ``Π_F u_D``
    (zero without Dirichlet data).

    Parameters
    ----------
    mesh
        The triangulation.
    k
        Polynomial degree of cell, side and Raviart–Thomas unknowns.
    quadrature_degree
        Exactness of the cell rule used for nonlinear integrands; raised to
        at least ``2k + 2`` so local mass matrices stay exact.
    dirichlet
        Boundary data ``u_D``; ``None`` for homogeneous conditions.
    """

    def __init__(
        self,
        mesh: Mesh,
        *,
        k: int,
        quadrature_degree: Optional[int] = None,
        dirichlet: Field = None,
    ):
        util.validate_range("k", k, lower=0, upper=settings.MAX_POLYNOMIAL_DEGREE)
        self.mesh = mesh
        self.k = k
        self.dirichlet = dirichlet

        self.cell_basis = cell_basis(k)
        self.edge_basis = edge_basis(k)
        self.rt_basis = rt_basis(k)
        n_cell, n_edge = self.cell_basis.dim, self.edge_basis.dim
        self.n_cell_dofs, self.n_side_dofs, self.n_rt = n_cell, n_edge, self.rt_basis.dim

        self.quadrature_degree = max(quadrature_degree or 0, 2 * k + 2)
        self.rule = quad_rule_triangle(self.quadrature_degree)
        self.edge_rule = quad_rule_edge(self.quadrature_degree)

        # -- dof layout --
        n_t, n_s = mesh.n_cells, mesh.n_sides
        self.cell_dofs = np.arange(n_t * n_cell).reshape(n_t, n_cell)
        self.side_dofs = n_t * n_cell + np.arange(n_s * n_edge).reshape(n_s, n_edge)
        self.n_full = n_t * n_cell + n_s * n_edge
        self.local_to_full = np.concatenate(
            [self.cell_dofs] + [self.side_dofs[mesh.cell_sides[:, j]] for j in range(3)],
            axis=1,
        )

        free = np.ones(self.n_full, dtype=bool)
        free[self.side_dofs[mesh.boundary_sides].ravel()] = False
        self.free = free
        self.free_index = np.flatnonzero(free)
        self.full_to_free = -np.ones(self.n_full, dtype=np.int64)
        self.full_to_free[self.free_index] = np.arange(len(self.free_index))

        self.boundary_values = np.zeros(self.n_full)
        if dirichlet is not None and len(mesh.boundary_sides):
            self.boundary_values[self.side_dofs[mesh.boundary_sides]] = l2_project_edge(
                mesh, dirichlet, k, sides=mesh.boundary_sides
            )

        self._init_reference_data()
        self._init_reconstruction()

    @property
    def ndof(self) -> int:
        return len(self.free_index)

    def _init_reference_data(self) -> None:
        pts = self.rule.reference_points
        self.weights = self.rule.weights
        self.phi_q = self.cell_basis.values(pts)
        self.grad_phi_q = self.cell_basis.gradients(pts)
        self.tau_q = self.rt_basis.values(pts)
        self.div_q = self.rt_basis.divergence(pts)
        self.points = self.mesh.map_to_physical(pts)

        s = self.edge_rule.reference_points[:, 0]
        self.edge_s = s
        self.edge_weights = self.edge_rule.weights
        edge_pts = [reference_edge_points(j, s) for j in range(3)]
        self.tau_edge = np.stack([self.rt_basis.values(x) for x in edge_pts])
        self.phi_edge = np.stack([self.cell_basis.values(x) for x in edge_pts])
        self.psi_edge = self.edge_basis.values(s)
        self.psi_edge_flipped = self.edge_basis.values(1.0 - s)

    def _init_reconstruction(self) -> None:
        mesh = self.mesh
        # -(v_T, div τ)_T is cell independent under the Piola map
        cell_block = -REFERENCE_AREA * np.einsum(
            "q,qr,qi->ri", self.weights, self.div_q, self.phi_q
        )

        blocks = [np.broadcast_to(cell_block, (mesh.n_cells,) + cell_block.shape)]
        for j in range(3):
            flux = self.tau_edge[j] @ REFERENCE_NORMALS[j]  # (nq, nR)
            edge_block = REFERENCE_EDGE_LENGTHS[j] * np.einsum(
                "q,qr,qi->ri", self.edge_weights, flux, self.psi_edge
            )
            signs = np.where(
                mesh.cell_side_flip[:, j, None], self.edge_basis.flip_signs, 1.0
            )
            blocks.append(edge_block[None, :, :] * signs[:, None, :])

        self.rhs_operator = np.concatenate(blocks, axis=2)
        self.mass = rt_mass_matrices(mesh, self.k)
        self.reconstruction = np.linalg.solve(self.mass, self.rhs_operator)

    def solve_mass(self, load: np.ndarray) -> np.ndarray:
        """Solves the local RT mass systems for right-hand sides ``(nT, nR)``."""
        return np.linalg.solve(self.mass, load[..., None])[..., 0]

    def evaluate(self, field: Field, *, components: Optional[int] = None) -> np.ndarray:
        """Data at the cell quadrature points, ``(nT, nq)`` or ``(nT, nq, 2)``."""
        return util.evaluate_field(
            field, self.points[..., 0], self.points[..., 1], components=components
        )

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Cellwise integrals of values at quadrature points."""
        return self.mesh.areas * (values @ self.weights)

    def cell_values_at_quadrature(self, v: "HHOFunction") -> np.ndarray:
        return v.cell_values @ self.phi_q.T

    def __repr__(self):
        return f"HHOSpace(k={self.k}, cells={self.mesh.n_cells}, ndof={self.ndof})"


class HHOFunction:
    """Coefficients of ``v_h = (v_T, v_F)`` over all cells and sides."""

    def __init__(self, space: HHOSpace, values: Optional[np.ndarray] = None):
        self.space = space
        if values is None:
            values = space.boundary_values.copy()
        values = np.asarray(values, dtype=float)
        if values.shape != (space.n_full,):
            raise error.ValidationError(
                f"coefficient vector has shape {values.shape}, "
                f"expected ({space.n_full},)"
            )
        self.values = values

    @classmethod
    def from_free(cls, space: HHOSpace, free_values: np.ndarray) -> "HHOFunction":
        values = space.boundary_values.copy()
        values[space.free_index] = free_values
        return cls(space, values)

    def __len__(self):
        return self.space.ndof

    @property
    def free_values(self) -> np.ndarray:
        return self.values[self.space.free_index]

    @property
    def cell_values(self) -> np.ndarray:
        return self.values[self.space.cell_dofs]

    @property
    def side_values(self) -> np.ndarray:
        return self.values[self.space.side_dofs]

    def local_values(self) -> np.ndarray:
        return self.values[self.space.local_to_full]

    def __repr__(self):
        return f"HHOFunction(ndof={len(self)})"


class GradientField:
    """Piecewise RT_k field given by per-cell coefficient blocks."""

    def __init__(self, space: HHOSpace, coefficients: np.ndarray):
        coefficients = np.asarray(coefficients, dtype=float)
        if coefficients.shape != (space.mesh.n_cells, space.n_rt):
            raise error.ValidationError(
                f"RT coefficients have shape {coefficients.shape}, expected "
                f"({space.mesh.n_cells}, {space.n_rt})"
            )
        self.space = space
        self.coefficients = coefficients

    def values(self) -> np.ndarray:
        """Physical values at the cell quadrature points, ``(nT, nq, 2)``."""
        reference = np.einsum("cr,qri->cqi", self.coefficients, self.space.tau_q)
        return piola_values(self.space.mesh, reference)

    def divergence(self) -> np.ndarray:
        """Divergence at the cell quadrature points, ``(nT, nq)``."""
        div = self.coefficients @ self.space.div_q.T
        return div / self.space.mesh.determinants[:, None]

    def edge_values(self, edge: int) -> np.ndarray:
        """Values on local edge ``edge`` of every cell at the edge rule points.

        Points are ordered along the local edge direction.
        """
        reference = np.einsum(
            "cr,qri->cqi", self.coefficients, self.space.tau_edge[edge]
        )
        return piola_values(self.space.mesh, reference)

    def mean_values(self) -> np.ndarray:
        """Cellwise integral means ``Π⁰``, shape ``(nT, 2)``."""
        return np.einsum("q,cqi->ci", self.space.weights, self.values())

    def __repr__(self):
        return f"{self.__class__.__name__}(cells={len(self.coefficients)})"


def reconstruct_gradient(space: HHOSpace, v_h: HHOFunction) -> GradientField:
    """Applies the cached local reconstruction matrices to ``v_h``."""
    if v_h.space is not space:
        raise error.ValidationError("HHOFunction belongs to a different space")
    coefficients = np.einsum("cij,cj->ci", space.reconstruction, v_h.local_values())
    return GradientField(space, coefficients)


def interpolate(space: HHOSpace, v: Field) -> HHOFunction:
    """Returns ``(Π_T v, Π_F v)`` including the traces on boundary sides."""
    values = np.zeros(space.n_full)
    values[space.cell_dofs] = l2_project_cell(
        space.mesh, v, space.k, quadrature_degree=max(space.quadrature_degree, 2 * space.k + 6)
    )
    values[space.side_dofs] = l2_project_edge(
        space.mesh, v, space.k, quadrature_degree=max(space.quadrature_degree, 2 * space.k + 6)
    )
    return HHOFunction(space, values)


def discrete_norm(space: HHOSpace, v_h: HHOFunction, *, p: float = 2.0) -> float:
    """Returns ``(Σ_T ‖∇v_T‖^p + Σ_{F⊂∂T} h_F^{1-p} ‖v_F − v_T‖^p_{L^p(F)})^{1/p}``."""
    mesh = space.mesh
    cells = v_h.cell_values

    inverse = np.linalg.inv(mesh.jacobians)
    grads = np.einsum("ci,qij,cjk->cqk", cells, space.grad_phi_q, inverse)
    total = space.integrate(np.linalg.norm(grads, axis=2) ** p).sum()

    sides = v_h.side_values
    for j in range(3):
        side_index = mesh.cell_sides[:, j]
        flip = mesh.cell_side_flip[:, j]
        psi = np.where(flip[:, None, None], space.psi_edge_flipped, space.psi_edge)
        v_f = np.einsum("cqi,ci->cq", psi, sides[side_index])
        v_t = cells @ space.phi_edge[j].T
        h_f = mesh.side_lengths[side_index]
        integral = h_f * (np.abs(v_f - v_t) ** p @ space.edge_weights)
        total += np.sum(h_f ** (1.0 - p) * integral)

    return float(total ** (1.0 / p))


class EnergyFunctional:
    """Discrete energy ``E_h(v) = ∫ W(Rv) − ∫ f v_T (+ α ‖g − v_T‖²)``.

    Data at quadrature points and the load vector are evaluated once; the
    energy, gradient and Hessian act on full coefficient vectors.
    """

    def __init__(
        self,
        space: HHOSpace,
        density,
        f: Field,
        *,
        fidelity: Optional[FidelityTerm] = None,
    ):
        self.space = space
        self.density = density
        self.fidelity = fidelity

        self.f_q = space.evaluate(f)
        self.load = np.einsum("c,q,cq,qi->ci", space.mesh.areas, space.weights, self.f_q, space.phi_q)

        if fidelity is not None:
            self.g_q = space.evaluate(fidelity.g)
            self.g_load = np.einsum(
                "c,q,cq,qi->ci", space.mesh.areas, space.weights, self.g_q, space.phi_q
            )

        self._jac_t = np.transpose(space.mesh.jacobians, (0, 2, 1))

    def _reconstruct(self, values: np.ndarray) -> np.ndarray:
        local = values[self.space.local_to_full]
        return np.einsum("cij,cj->ci", self.space.reconstruction, local)

    def gradient_values(self, values: np.ndarray) -> np.ndarray:
        coefficients = self._reconstruct(values)
        return GradientField(self.space, coefficients).values()

    def energy(self, values: np.ndarray) -> float:
        space = self.space
        r_q = self.gradient_values(values)
        v_q = values[space.cell_dofs] @ space.phi_q.T

        density_part = space.integrate(self.density.W(r_q))
        load_part = space.integrate(self.f_q * v_q)
        total = density_part - load_part
        if self.fidelity is not None:
            total = total + self.fidelity.alpha * space.integrate((self.g_q - v_q) ** 2)
        return float(np.sum(total))

    def stress_load(self, r_q: np.ndarray) -> np.ndarray:
        """``(DW(Rv), τ_r)_T`` for every cell, ``(nT, nR)``."""
        pulled = np.einsum("cij,cqj->cqi", self._jac_t, self.density.DW(r_q))
        return REFERENCE_AREA * np.einsum(
            "q,cqi,qri->cr", self.space.weights, pulled, self.space.tau_q
        )

    def local_gradient(self, values: np.ndarray) -> np.ndarray:
        space = self.space
        r_q = self.gradient_values(values)
        local = np.einsum("cri,cr->ci", space.reconstruction, self.stress_load(r_q))
        cell = local[:, : space.n_cell_dofs]
        cell -= self.load
        if self.fidelity is not None:
            areas = space.mesh.areas[:, None]
            cell += 2.0 * self.fidelity.alpha * (
                areas * values[space.cell_dofs] - self.g_load
            )
        return local

    def full_gradient(self, values: np.ndarray) -> np.ndarray:
        space = self.space
        return np.bincount(
            space.local_to_full.ravel(),
            weights=self.local_gradient(values).ravel(),
            minlength=space.n_full,
        )

    def gradient(self, values: np.ndarray) -> np.ndarray:
        return self.full_gradient(values)[self.space.free_index]

    def local_hessian(self, values: np.ndarray) -> np.ndarray:
        space = self.space
        r_q = self.gradient_values(values)
        hess = self.density.D2W(r_q)  # (nT, nq, 2, 2)
        jac = space.mesh.jacobians
        pulled = np.einsum("cai,cqab,cbj->cqij", jac, hess, jac)
        tmp = np.einsum("cqij,qsj->cqis", pulled, space.tau_q)
        h_rt = REFERENCE_AREA * np.einsum("q,qri,cqis->crs", space.weights, space.tau_q, tmp)
        h_rt /= space.mesh.determinants[:, None, None]

        rec = space.reconstruction
        local = np.einsum("cri,crs,csj->cij", rec, h_rt, rec)
        if self.fidelity is not None:
            n = space.n_cell_dofs
            local[:, np.arange(n), np.arange(n)] += (
                2.0 * self.fidelity.alpha * space.mesh.areas[:, None]
            )
        return local

    def hessian(self, values: np.ndarray, *, local: Optional[np.ndarray] = None) -> sp.csr_matrix:
        """Hessian restricted to the degrees of freedom."""
        space = self.space
        if local is None:
            local = self.local_hessian(values)
        dofs = space.full_to_free[space.local_to_full]
        n_local = dofs.shape[1]
        rows = np.repeat(dofs, n_local, axis=1).ravel()
        cols = np.tile(dofs, (1, n_local)).ravel()
        data = local.reshape(len(dofs), -1).ravel()

        keep = (rows >= 0) & (cols >= 0)
        return sp.csr_matrix(
            (data[keep], (rows[keep], cols[keep])), shape=(space.ndof, space.ndof)
        )


def discrete_energy(
    space: HHOSpace,
    density,
    f: Field,
    v_h: HHOFunction,
    *,
    fidelity: Optional[FidelityTerm] = None,
) -> float:
    """Evaluates ``E_h(v_h)`` by the space's quadrature rule."""
    return EnergyFunctional(space, density, f, fidelity=fidelity).energy(v_h.values)


def energy_gradient(
    space: HHOSpace,
    density,
    f: Field,
    v_h: HHOFunction,
    *,
    fidelity: Optional[FidelityTerm] = None,
) -> np.ndarray:
    """Derivative of ``E_h`` with respect to each degree of freedom."""
    return EnergyFunctional(space, density, f, fidelity=fidelity).gradient(v_h.values)
