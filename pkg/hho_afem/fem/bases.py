"""Polynomial, Raviart–Thomas and Lagrange bases on the reference triangle.

Reference triangle: vertices (0,0), (1,0), (0,1), area 1/2. Cell and edge
bases are orthonormal up to the element measure, i.e. the physical mass
matrices are ``|T| I`` and ``h_F I``. Raviart–Thomas functions are mapped to
physical triangles by the contravariant Piola transform
``τ = J τ̂ / det J``.
"""
from functools import lru_cache
from typing import Callable, List, Optional, Tuple

import numpy as np

from hho_afem import error, util
from hho_afem.fem import settings
from hho_afem.fem.mesh import LOCAL_EDGES, Mesh
from hho_afem.fem.quadrature import quad_rule_edge, quad_rule_triangle

REFERENCE_AREA = 0.5
REFERENCE_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
REFERENCE_EDGE_LENGTHS = np.array([np.sqrt(2.0), 1.0, 1.0])
REFERENCE_NORMALS = np.array(
    [[1.0, 1.0], [-np.sqrt(2.0), 0.0], [0.0, -np.sqrt(2.0)]]
) / np.sqrt(2.0)


def monomial_exponents(degree: int) -> List[Tuple[int, int]]:
    return [(d - j, j) for d in range(degree + 1) for j in range(d + 1)]


def _monomials(exponents, points: np.ndarray) -> np.ndarray:
    x, y = points[..., 0], points[..., 1]
    return np.stack([x**a * y**b for a, b in exponents], axis=-1)


def _monomial_gradients(exponents, points: np.ndarray) -> np.ndarray:
    x, y = points[..., 0], points[..., 1]
    dx = [a * x ** max(a - 1, 0) * y**b for a, b in exponents]
    dy = [b * x**a * y ** max(b - 1, 0) for a, b in exponents]
    return np.stack([np.stack(dx, axis=-1), np.stack(dy, axis=-1)], axis=-1)


def reference_edge_points(edge: int, s: np.ndarray) -> np.ndarray:
    """Points at parameters ``s`` along local edge ``edge`` in its local direction."""
    start, stop = REFERENCE_VERTICES[LOCAL_EDGES[edge]]
    return start[None, :] + np.asarray(s)[:, None] * (stop - start)[None, :]


class CellBasis:
    """Orthonormalized basis of P_ℓ on the reference triangle.

    ``∫_T̂ φ̂_i φ̂_j = |T̂| δ_ij`` and ``φ̂_0 ≡ 1``.
    """

    def __init__(self, degree: int):
        util.validate_range("degree", degree, lower=0)
        self.degree = degree
        self.exponents = monomial_exponents(degree)
        self.dim = len(self.exponents)

        rule = quad_rule_triangle(2 * degree)
        values = _monomials(self.exponents, rule.reference_points)
        coefficients = np.eye(self.dim)
        # the second sweep brings the Gram matrix to the identity at round-off level
        for _ in range(2):
            basis = values @ coefficients
            gram = basis.T @ (rule.weights[:, None] * basis)
            lower = np.linalg.cholesky(gram)
            coefficients = coefficients @ np.linalg.inv(lower).T
        self.coefficients = coefficients

    def values(self, points: np.ndarray) -> np.ndarray:
        return _monomials(self.exponents, points) @ self.coefficients

    def gradients(self, points: np.ndarray) -> np.ndarray:
        """Reference gradients with shape ``points.shape[:-1] + (dim, 2)``."""
        grads = _monomial_gradients(self.exponents, points)
        return np.einsum("...mi,mk->...ki", grads, self.coefficients)

    def __repr__(self):
        return f"CellBasis(degree={self.degree})"


class EdgeBasis:
    """Scaled Legendre basis of P_k on [0,1] with ``∫_0^1 ψ_i ψ_j = δ_ij``.

    ``ψ_i(1 - s) = (-1)^i ψ_i(s)`` converts between the two edge directions.
    """

    def __init__(self, degree: int):
        util.validate_range("degree", degree, lower=0)
        self.degree = degree
        self.dim = degree + 1
        self.scaling = np.sqrt(2.0 * np.arange(self.dim) + 1.0)
        self.flip_signs = (-1.0) ** np.arange(self.dim)

    def values(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return np.polynomial.legendre.legvander(2.0 * s - 1.0, self.degree) * self.scaling

    def __repr__(self):
        return f"EdgeBasis(degree={self.degree})"


class RTBasis:
    """Raviart–Thomas space RT_k = P_k² + x P̃_k on the reference triangle.

    The shape functions are dual to the canonical moments: normal moments
    against ``ψ_i`` on each local edge (in local edge direction), then
    interior moments against ``φ_i ∈ P_{k-1}`` for each component.
    """

    def __init__(self, degree: int):
        util.validate_range("degree", degree, lower=0)
        self.degree = degree
        self.dim = (degree + 1) * (degree + 3)
        self._exponents = monomial_exponents(degree)
        self._homogeneous = [(degree - j, j) for j in range(degree + 1)]

        dofs = self._moment_matrix()
        self.coefficients = np.linalg.inv(dofs)

    def _raw_values(self, points: np.ndarray) -> np.ndarray:
        mono = _monomials(self._exponents, points)
        zero = np.zeros_like(mono)
        homo = _monomials(self._homogeneous, points)
        first = np.stack([mono, zero], axis=-1)
        second = np.stack([zero, mono], axis=-1)
        third = homo[..., None] * points[..., None, :]
        return np.concatenate([first, second, third], axis=-2)

    def _raw_divergence(self, points: np.ndarray) -> np.ndarray:
        grads = _monomial_gradients(self._exponents, points)
        homo = _monomials(self._homogeneous, points)
        # div(x m) = (2 + k) m for m homogeneous of degree k
        return np.concatenate(
            [grads[..., 0], grads[..., 1], (2.0 + self.degree) * homo], axis=-1
        )

    def _moment_matrix(self) -> np.ndarray:
        k = self.degree
        edge = EdgeBasis(k)
        edge_rule = quad_rule_edge(2 * k + 1)
        s = edge_rule.reference_points[:, 0]

        rows = []
        for j in range(3):
            raw = self._raw_values(reference_edge_points(j, s))
            flux = raw @ REFERENCE_NORMALS[j]  # (nq, nraw)
            weighted = REFERENCE_EDGE_LENGTHS[j] * edge_rule.weights[:, None] * flux
            rows.append(edge.values(s).T @ weighted)

        if k > 0:
            cell = CellBasis(k - 1)
            rule = quad_rule_triangle(2 * k)
            raw = self._raw_values(rule.reference_points)
            phi = cell.values(rule.reference_points)
            for c in range(2):
                rows.append(
                    REFERENCE_AREA * phi.T @ (rule.weights[:, None] * raw[..., c])
                )

        return np.vstack(rows)

    def values(self, points: np.ndarray) -> np.ndarray:
        """Reference shape functions, ``points.shape[:-1] + (dim, 2)``."""
        return np.einsum("...ri,rk->...ki", self._raw_values(points), self.coefficients)

    def divergence(self, points: np.ndarray) -> np.ndarray:
        return self._raw_divergence(points) @ self.coefficients

    def __repr__(self):
        return f"RTBasis(degree={self.degree})"


class LagrangeBasis:
    """Nodal basis of P_m on the reference triangle for conforming postprocessing.

    Nodes are ordered vertices, then ``m - 1`` nodes per local edge in local
    edge direction, then interior lattice nodes.
    """

    def __init__(self, degree: int):
        util.validate_range("degree", degree, lower=1)
        self.degree = m = degree
        self.exponents = monomial_exponents(m)
        self.dim = len(self.exponents)

        t = np.arange(1, m) / m
        nodes = [REFERENCE_VERTICES]
        for j in range(3):
            nodes.append(reference_edge_points(j, t))
        interior = [
            (i / m, j / m) for j in range(1, m) for i in range(1, m) if i + j < m
        ]
        nodes.append(np.array(interior).reshape(-1, 2))
        self.nodes = np.vstack(nodes)
        self.n_edge_nodes = m - 1
        self.n_interior_nodes = len(interior)

        vandermonde = _monomials(self.exponents, self.nodes)
        self.coefficients = np.linalg.inv(vandermonde)

    def values(self, points: np.ndarray) -> np.ndarray:
        return _monomials(self.exponents, points) @ self.coefficients

    def gradients(self, points: np.ndarray) -> np.ndarray:
        grads = _monomial_gradients(self.exponents, points)
        return np.einsum("...mi,mk->...ki", grads, self.coefficients)


@lru_cache(maxsize=None)
def cell_basis(degree: int) -> CellBasis:
    return CellBasis(degree)


@lru_cache(maxsize=None)
def edge_basis(degree: int) -> EdgeBasis:
    return EdgeBasis(degree)


@lru_cache(maxsize=None)
def rt_basis(degree: int) -> RTBasis:
    return RTBasis(degree)


@lru_cache(maxsize=None)
def lagrange_basis(degree: int) -> LagrangeBasis:
    return LagrangeBasis(degree)


# -- Piola helpers --


def piola_values(mesh: Mesh, reference_values: np.ndarray, cells=None) -> np.ndarray:
    """Maps reference vector values ``(n, ..., 2)`` of the selected cells."""
    cells = slice(None) if cells is None else cells
    jac = mesh.jacobians[cells]
    det = mesh.determinants[cells]
    mapped = np.einsum("cij,c...j->c...i", jac, reference_values)
    return mapped / det.reshape((-1,) + (1,) * (mapped.ndim - 1))


def rt_mass_matrices(mesh: Mesh, degree: int, cells=None) -> np.ndarray:
    """Local RT_k mass matrices ``∫_T τ_r · τ_s``, shape ``(n, dim, dim)``."""
    cells = np.arange(mesh.n_cells) if cells is None else np.asarray(cells)
    rt = rt_basis(degree)
    rule = quad_rule_triangle(2 * degree + 2)
    tau = rt.values(rule.reference_points)  # (nq, nR, 2)
    moments = REFERENCE_AREA * np.einsum("q,qra,qsb->abrs", rule.weights, tau, tau)
    jac = mesh.jacobians[cells]
    metric = np.einsum("cai,caj->cij", jac, jac)
    return np.einsum("cab,abrs->crs", metric, moments) / mesh.determinants[cells, None, None]


# -- L² projections --


def _cell_quadrature_degree(degree: int, quadrature_degree: Optional[int]) -> int:
    if quadrature_degree is not None:
        return quadrature_degree
    return min(2 * degree + 6, settings.QUADRATURE_MAX_DEGREE)


def l2_project_cell(
    mesh: Mesh,
    f: Callable,
    degree: int,
    *,
    cells: Optional[np.ndarray] = None,
    quadrature_degree: Optional[int] = None,
) -> np.ndarray:
    """Coefficients of Π^ℓ f in the orthonormal cell basis, ``(n, dim P_ℓ)``."""
    cells = np.arange(mesh.n_cells) if cells is None else np.asarray(cells)
    rule = quad_rule_triangle(_cell_quadrature_degree(degree, quadrature_degree))
    phi = cell_basis(degree).values(rule.reference_points)
    x = mesh.map_to_physical(rule.reference_points, cells)
    values = util.evaluate_field(f, x[..., 0], x[..., 1])
    return np.einsum("q,cq,qi->ci", rule.weights, values, phi)


def l2_project_edge(
    mesh: Mesh,
    f: Callable,
    degree: int,
    *,
    sides: Optional[np.ndarray] = None,
    quadrature_degree: Optional[int] = None,
) -> np.ndarray:
    """Coefficients of Π^k_F f in the edge basis along the stored side direction."""
    sides = np.arange(mesh.n_sides) if sides is None else np.asarray(sides)
    rule = quad_rule_edge(_cell_quadrature_degree(degree, quadrature_degree))
    psi = edge_basis(degree).values(rule.reference_points[:, 0])
    x = side_points(mesh, rule.reference_points[:, 0], sides)
    values = util.evaluate_field(f, x[..., 0], x[..., 1])
    return np.einsum("q,fq,qi->fi", rule.weights, values, psi)


def l2_project_rt(
    mesh: Mesh,
    field: Callable,
    degree: int,
    *,
    cells: Optional[np.ndarray] = None,
    quadrature_degree: Optional[int] = None,
) -> np.ndarray:
    """Coefficients of the cellwise RT_k projection of a vector field."""
    cells = np.arange(mesh.n_cells) if cells is None else np.asarray(cells)
    rule = quad_rule_triangle(_cell_quadrature_degree(degree, quadrature_degree))
    tau_ref = rt_basis(degree).values(rule.reference_points)
    x = mesh.map_to_physical(rule.reference_points, cells)
    values = util.evaluate_field(field, x[..., 0], x[..., 1], components=2)

    # ∫_T G·τ_r = |T̂| Σ_q w_q (Jᵀ G)·τ̂_r
    pulled = np.einsum("cji,cqj->cqi", mesh.jacobians[cells], values)
    load = REFERENCE_AREA * np.einsum("q,cqi,qri->cr", rule.weights, pulled, tau_ref)
    return np.linalg.solve(rt_mass_matrices(mesh, degree, cells), load[..., None])[..., 0]


def side_points(mesh: Mesh, s: np.ndarray, sides: Optional[np.ndarray] = None) -> np.ndarray:
    """Physical points at parameters ``s`` along stored side directions."""
    sides = np.arange(mesh.n_sides) if sides is None else np.asarray(sides)
    start = mesh.vertices[mesh.sides[sides, 0]]
    stop = mesh.vertices[mesh.sides[sides, 1]]
    return start[:, None, :] + np.asarray(s)[None, :, None] * (stop - start)[:, None, :]


def evaluate_cell_polynomial(
    mesh: Mesh, coefficients: np.ndarray, degree: int, cells: np.ndarray, points: np.ndarray
) -> np.ndarray:
    """Values of cell polynomials of ``cells`` at physical ``points`` ``(n, m, 2)``."""
    reference = mesh.map_to_reference(cells, points)
    phi = cell_basis(degree).values(reference)  # (n, m, dim)
    return np.einsum("cmi,ci->cm", phi, coefficients)
