from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from hho_afem import error, util
from hho_afem.abstract.hho_object import HHOObject
from hho_afem.fem import settings
from hho_afem.fem.bases import (
    cell_basis,
    edge_basis,
    evaluate_cell_polynomial,
    side_points,
)
from hho_afem.fem.hho import EnergyFunctional, FidelityTerm, HHOFunction, HHOSpace
from hho_afem.fem.mesh import Mesh


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = settings.GRADIENT_TOLERANCE
    step_tolerance: float = settings.STEP_TOLERANCE
    energy_tolerance: float = settings.ENERGY_TOLERANCE
    max_iterations: Optional[int] = None
    armijo: float = settings.ARMIJO_PARAMETER
    shrink_ratio: float = settings.TRUST_SHRINK_RATIO
    expand_ratio: float = settings.TRUST_EXPAND_RATIO
    condense: bool = False

    def __post_init__(self):
        for key in ("tolerance", "step_tolerance", "energy_tolerance", "armijo"):
            util.validate_range(key, getattr(self, key), lower=0.0, lower_inclusive=False)
        if self.max_iterations is not None:
            util.validate_range("max_iterations", self.max_iterations, lower=0)


class SolveReport(HHOObject):
    _object_type = "solve_report"
    _fields = ("iterations", "gradient_norm", "energy", "converged")
    _required_fields = ("iterations", "gradient_norm", "energy", "converged")


class _LinearSolveError(Exception):
    pass


def _solve_system(matrix: sp.csr_matrix, rhs: np.ndarray) -> np.ndarray:
    try:
        solution = splu(matrix.tocsc()).solve(rhs)
    except RuntimeError as err:
        raise _LinearSolveError(str(err))
    if not np.all(np.isfinite(solution)):
        raise _LinearSolveError("non-finite solution")
    return solution


def _solve_condensed(
    functional: EnergyFunctional,
    local: np.ndarray,
    matrix: sp.csr_matrix,
    rhs: np.ndarray,
    shift: float,
) -> np.ndarray:
    """Eliminates the cell unknowns blockwise before the sparse solve.

    Cell unknowns come first in the free numbering and couple only within
    their own cell, so the cell-cell block is block diagonal.
    """
    space = functional.space
    n_cells, n = space.mesh.n_cells, space.n_cell_dofs
    n_t = n_cells * n

    blocks = local[:, :n, :n] + shift * np.eye(n)
    try:
        inverse = np.linalg.inv(blocks)
    except np.linalg.LinAlgError as err:
        raise _LinearSolveError(str(err))
    cell_inverse = sp.bsr_matrix(
        (inverse, np.arange(n_cells), np.arange(n_cells + 1)), shape=(n_t, n_t)
    ).tocsr()

    k_tf = matrix[:n_t, n_t:]
    k_ft = matrix[n_t:, :n_t]
    k_ff = matrix[n_t:, n_t:]
    rhs_t, rhs_f = rhs[:n_t], rhs[n_t:]

    if k_ff.shape[0] == 0:
        return cell_inverse @ rhs_t

    schur = (k_ff - k_ft @ cell_inverse @ k_tf).tocsr()
    x_f = _solve_system(schur, rhs_f - k_ft @ (cell_inverse @ rhs_t))
    x_t = cell_inverse @ (rhs_t - k_tf @ x_f)
    return np.concatenate([x_t, x_f])


def minimize(
    space: HHOSpace,
    density,
    f,
    init: HHOFunction,
    config: Optional[SolverConfig] = None,
    *,
    fidelity: Optional[FidelityTerm] = None,
) -> Tuple[HHOFunction, SolveReport]:
    """Minimizes the discrete energy by regularized Newton steps.

    The Newton model uses the piecewise Hessian plus ``λ I`` with
    ``λ = ν |∇E_h|₂``; ``ν`` follows the usual trust-region ratio test and
    starts at zero. A model step failing the Armijo test is replaced by a
    steepest-descent step.

    Returns
    -------
        The final iterate and a ``SolveReport``. The report's ``converged``
        flag is set when the gradient infinity norm reached the tolerance or
        when a step below ``step_tolerance`` no longer decreases the energy
        beyond rounding.
    """
    config = config or SolverConfig()
    if init.space is not space:
        raise error.ValidationError("initial guess belongs to a different space")

    functional = EnergyFunctional(space, density, f, fidelity=fidelity)
    x = init.values.copy()
    x[~space.free] = space.boundary_values[~space.free]
    free = space.free_index

    energy = functional.energy(x)
    nu = 0.0
    iterations = 0
    stalled = False
    gradient_norm = np.inf

    while True:
        gradient = functional.gradient(x)
        gradient_norm = float(np.max(np.abs(gradient))) if len(gradient) else 0.0
        if gradient_norm <= config.tolerance:
            break
        if config.max_iterations is not None and iterations >= config.max_iterations:
            break

        local = functional.local_hessian(x)
        hessian = functional.hessian(x, local=local)
        shift = nu * float(np.linalg.norm(gradient))
        system = hessian + shift * sp.identity(space.ndof, format="csr")

        try:
            if config.condense:
                step = _solve_condensed(functional, local, system, -gradient, shift)
            else:
                step = _solve_system(system, -gradient)
            slope = float(gradient @ step)
            if slope >= 0.0:
                raise _LinearSolveError("not a descent direction")
        except _LinearSolveError as err:
            nu = min(max(4.0 * nu, settings.REGULARIZATION_MIN), settings.REGULARIZATION_MAX)
            util.log_debug("Regularizing Newton model", reason=str(err), nu=nu)
            if nu >= settings.REGULARIZATION_MAX:
                break
            continue

        predicted = -(slope + 0.5 * float(step @ (hessian @ step)))
        slack = config.energy_tolerance * (1.0 + abs(energy))

        t, trial_energy = _armijo(functional, x, free, step, slope, energy, slack, config)
        if t is None:
            step = -gradient
            slope = -float(gradient @ gradient)
            t, trial_energy = _armijo(functional, x, free, step, slope, energy, slack, config)
            nu = min(max(4.0 * nu, settings.REGULARIZATION_MIN), settings.REGULARIZATION_MAX)
            if t is None:
                util.log_info("Line search failed", iterations=iterations, gradient_norm=gradient_norm)
                break
        else:
            ratio = (energy - trial_energy) / predicted if predicted > 0.0 else 0.0
            if t == 1.0 and ratio > config.expand_ratio:
                nu = nu / 4.0 if nu / 4.0 >= settings.REGULARIZATION_MIN else 0.0
            elif ratio < config.shrink_ratio:
                nu = min(max(4.0 * nu, settings.REGULARIZATION_MIN), settings.REGULARIZATION_MAX)

        x[free] += t * step
        decrease = energy - trial_energy
        energy = trial_energy
        iterations += 1

        util.log_debug(
            "Newton iteration",
            iteration=iterations,
            energy=energy,
            gradient_norm=gradient_norm,
            nu=nu,
            step_length=t,
        )

        small_step = t * np.linalg.norm(step) <= config.step_tolerance * (
            1.0 + np.linalg.norm(x[free])
        )
        if small_step and decrease <= slack:
            gradient = functional.gradient(x)
            gradient_norm = float(np.max(np.abs(gradient))) if len(gradient) else 0.0
            stalled = True
            break

    report = SolveReport(
        iterations=iterations,
        gradient_norm=gradient_norm,
        energy=energy,
        converged=bool(gradient_norm <= config.tolerance or stalled),
    )
    util.log_info(
        "Minimization finished",
        iterations=iterations,
        converged=report.converged,
        gradient_norm=gradient_norm,
        ndof=space.ndof,
    )
    return HHOFunction(space, x), report


def _armijo(functional, x, free, step, slope, energy, slack, config):
    t = 1.0
    trial = x.copy()
    while t >= settings.ARMIJO_MIN_STEP:
        trial[free] = x[free] + t * step
        trial_energy = functional.energy(trial)
        if trial_energy <= energy + config.armijo * t * slope + slack:
            return t, trial_energy
        t *= 0.5
    return None, energy


def initial_guess(space: HHOSpace) -> HHOFunction:
    """Constant one on every cell and interior side; boundary data elsewhere."""
    values = space.boundary_values.copy()
    # φ_0 ≡ 1 and ψ_0 ≡ 1, all higher coefficients vanish
    values[space.cell_dofs[:, 0]] = 1.0
    interior = space.mesh.interior_sides
    values[space.side_dofs[interior, 0]] = 1.0
    return HHOFunction(space, values)


def _locate_on_parent_edges(coarse: Mesh, fine: Mesh, sides: np.ndarray, parents: np.ndarray):
    """Coarse side index containing each fine side, or -1 if interior to the parent."""
    a = fine.vertices[fine.sides[sides, 0]]
    b = fine.vertices[fine.sides[sides, 1]]
    located = -np.ones(len(sides), dtype=np.int64)

    for j in range(3):
        coarse_side = coarse.cell_sides[parents, j]
        p = coarse.vertices[coarse.sides[coarse_side, 0]]
        q = coarse.vertices[coarse.sides[coarse_side, 1]]
        t = q - p
        length2 = np.einsum("ij,ij->i", t, t)
        tol = settings.GEOMETRY_TOLERANCE * length2 * 1e2

        def on_line(z):
            d = z - p
            return np.abs(t[:, 0] * d[:, 1] - t[:, 1] * d[:, 0]) <= tol

        hit = on_line(a) & on_line(b) & (located < 0)
        located[hit] = coarse_side[hit]

    return located


def prolongate(u_h: HHOFunction, space: HHOSpace) -> HHOFunction:
    """Transfers a coarse function to the space on a refined mesh.

    Child cells receive the parent polynomial; sub-sides of coarse sides
    receive the projection of the coarse side polynomial; new sides inside a
    coarse triangle receive the projection of that triangle's polynomial.
    Boundary sides keep the fine space's boundary data.

    Raises
    ------
    error.MeshMismatchError
        Thrown when the fine mesh was not refined from the coarse mesh.
    """
    coarse_space = u_h.space
    coarse, fine = coarse_space.mesh, space.mesh
    k = space.k

    if coarse_space.k != k:
        raise error.MeshMismatchError("prolongation between different degrees")
    parents = fine.parents
    if parents is None or len(parents) != fine.n_cells:
        raise error.MeshMismatchError("fine mesh carries no parent map")
    if parents.min() < 0 or parents.max() >= coarse.n_cells:
        raise error.MeshMismatchError("parent map does not fit the coarse mesh")
    barycentric = coarse.map_to_reference(parents, fine.centroids[:, None, :])[:, 0, :]
    if (barycentric.min(axis=1) < -1e-10).any() or (barycentric.sum(axis=1) > 1 + 1e-10).any():
        raise error.MeshMismatchError("child triangles lie outside their parents")

    values = space.boundary_values.copy()
    coarse_cells = u_h.cell_values
    coarse_sides = u_h.side_values

    # cells
    rule = space.rule
    phi = cell_basis(k).values(rule.reference_points)
    x = fine.map_to_physical(rule.reference_points)
    parent_values = evaluate_cell_polynomial(coarse, coarse_cells[parents], k, parents, x)
    values[space.cell_dofs] = np.einsum("q,cq,qi->ci", rule.weights, parent_values, phi)

    # interior sides
    interior = fine.interior_sides
    edge_rule = space.edge_rule
    s = edge_rule.reference_points[:, 0]
    psi = edge_basis(k).values(s)
    points = side_points(fine, s, interior)
    owner = parents[fine.side_cells[interior, 0]]
    located = _locate_on_parent_edges(coarse, fine, interior, owner)

    samples = np.empty(points.shape[:2])
    on_edge = located >= 0
    if on_edge.any():
        cs = located[on_edge]
        start = coarse.vertices[coarse.sides[cs, 0]]
        direction = coarse.vertices[coarse.sides[cs, 1]] - start
        param = np.einsum(
            "fqi,fi->fq", points[on_edge] - start[:, None, :], direction
        ) / np.einsum("fi,fi->f", direction, direction)[:, None]
        basis = edge_basis(k).values(param)  # (n, nq, nE)
        samples[on_edge] = np.einsum("fqi,fi->fq", basis, coarse_sides[cs])
    if (~on_edge).any():
        cells = owner[~on_edge]
        samples[~on_edge] = evaluate_cell_polynomial(
            coarse, coarse_cells[cells], k, cells, points[~on_edge]
        )

    values[space.side_dofs[interior]] = np.einsum("q,fq,qi->fi", edge_rule.weights, samples, psi)
    return HHOFunction(space, values)
