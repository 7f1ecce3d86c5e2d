from __future__ import annotations

from typing import Dict, Optional, Union

import numpy as np

from hho_afem import error, util
from hho_afem.abstract.hho_object import HHOObject
from hho_afem.afem.enums import ProblemId
from hho_afem.fem import settings
from hho_afem.fem.hho import FidelityTerm
from hho_afem.fem.mesh import Mesh, build_mesh
from hho_afem.fem.quadrature import quad_rule_triangle
from hho_afem.fem.solve import SolverConfig
from hho_afem.model.density import optimal_design, plaplace, two_well

# Reference minimal energies. The p-Laplace square value is exact; the others
# are Aitken extrapolations of uniform-refinement runs and carry an
# uncertainty of about 1e-8.
PLAPLACE_SQUARE_ENERGY = -1.0 / 1960.0  # -(3/4) ∫|∇u|⁴ with ∫|∇u|⁴ = 1/1470
PLAPLACE_LSHAPE_ENERGY = -0.34333387
ODP_SQUARE_ENERGY = -0.011181337  # λ = 0.0084
ODP_LSHAPE_ENERGY = -0.074551285  # λ = 0.0145

ODP_MU1 = 1.0
ODP_MU2 = 2.0
ODP_LAMBDA_SQUARE = 0.0084
ODP_LAMBDA_LSHAPE = 0.0145

TWOWELL_DIRECTION = np.array([3.0, 2.0]) / np.sqrt(13.0)
TWOWELL_ALPHA = 0.5


# -- initial meshes --


def square_mesh() -> Mesh:
    """Unit square split into four triangles at its center."""
    return build_mesh(
        [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]],
        [[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]],
    )


def lshape_mesh() -> Mesh:
    """``(−1,1)² \\ [0,1)×(−1,0]`` from three criss-crossed unit squares."""
    vertices = [
        [-1.0, -1.0], [0.0, -1.0], [-1.0, 0.0], [0.0, 0.0], [1.0, 0.0],
        [-1.0, 1.0], [0.0, 1.0], [1.0, 1.0],
        [-0.5, -0.5], [-0.5, 0.5], [0.5, 0.5],
    ]
    triangles = []
    for corners, center in (((0, 1, 3, 2), 8), ((2, 3, 6, 5), 9), ((3, 4, 7, 6), 10)):
        for i in range(4):
            triangles.append([corners[i], corners[(i + 1) % 4], center])
    return build_mesh(vertices, triangles)


def twowell_mesh() -> Mesh:
    """``(0,1)×(0,3/2)`` cut along the interface between the two wells."""
    return build_mesh(
        [[0.0, 0.0], [1.0, 0.0], [1.0, 1.5], [0.0, 1.5]],
        [[0, 1, 3], [1, 2, 3]],
    )


# -- p-Laplace square data, u = x y (x − 1)(y − 1) --


def _plaplace_square_grad(x, y):
    return np.stack([(2.0 * x - 1.0) * y * (y - 1.0), x * (x - 1.0) * (2.0 * y - 1.0)], axis=-1)


def _plaplace_square_u(x, y):
    return x * y * (x - 1.0) * (y - 1.0)


def _plaplace_square_sigma(x, y):
    a = _plaplace_square_grad(x, y)
    return np.einsum("...i,...i->...", a, a)[..., None] * a


def _plaplace_square_f(x, y):
    # −div(|a|² a) = −(|a|² Δu + 2 aᵀ D²u a)
    a = _plaplace_square_grad(x, y)
    ax, ay = a[..., 0], a[..., 1]
    uxx = 2.0 * y * (y - 1.0)
    uyy = 2.0 * x * (x - 1.0)
    uxy = (2.0 * x - 1.0) * (2.0 * y - 1.0)
    norm2 = ax**2 + ay**2
    return -(norm2 * (uxx + uyy) + 2.0 * (ax**2 * uxx + 2.0 * ax * ay * uxy + ay**2 * uyy))


# -- two-well data stub --
#
# Manufactured data with the structure of the relaxed two-well benchmark:
# wells F₂ = −F₁ = e, the interface δ = 0 along the diagonal of the initial
# mesh, a smooth exact solution with |∇u| ≥ 1 and f ≡ 0. The lower-order
# datum g is chosen so that u solves the Euler–Lagrange equation.


def _twowell_delta(x, y):
    return (3.0 * (x - 1.0) + 2.0 * y) / np.sqrt(13.0)


def _twowell_slope(delta):
    return np.where(delta <= 0.0, delta**2 / 8.0 + 1.0, 1.0)


def twowell_u(x, y):
    delta = _twowell_delta(x, y)
    return np.where(delta <= 0.0, delta**3 / 24.0 + delta, delta)


def twowell_grad(x, y):
    return _twowell_slope(_twowell_delta(x, y))[..., None] * TWOWELL_DIRECTION


def twowell_sigma(x, y):
    slope = _twowell_slope(_twowell_delta(x, y))
    return (4.0 * (slope**3 - slope))[..., None] * TWOWELL_DIRECTION


def _twowell_div_sigma(x, y):
    delta = _twowell_delta(x, y)
    slope = _twowell_slope(delta)
    return np.where(delta <= 0.0, (3.0 * slope**2 - 1.0) * delta, 0.0)


def twowell_g(alpha: float = TWOWELL_ALPHA):
    def g(x, y):
        return twowell_u(x, y) - _twowell_div_sigma(x, y) / (2.0 * alpha)

    return g


def twowell_exact_energy(alpha: float = TWOWELL_ALPHA) -> float:
    """``E(u) = ∫ W(∇u) + α‖g − u‖²`` by quadrature on the interface-aligned mesh."""
    density = two_well(-TWOWELL_DIRECTION, TWOWELL_DIRECTION)
    mesh = twowell_mesh()
    rule = quad_rule_triangle(12)
    x = mesh.map_to_physical(rule.reference_points)
    px, py = x[..., 0], x[..., 1]
    gap = twowell_g(alpha)(px, py) - twowell_u(px, py)
    integrand = density.W(twowell_grad(px, py)) + alpha * gap**2
    return float(np.sum(mesh.areas * (integrand @ rule.weights)))


# -- configurations --


def _quadrature_degree(p: float, k: int) -> int:
    return int(min(max(np.ceil(p * (k + 1)), 2 * k + 2), settings.QUADRATURE_MAX_DEGREE))


class BenchmarkConfig(HHOObject):
    """Fully specified benchmark run.

    ``reference_energy`` is the exact or extrapolated ``min E(V)`` when known.
    ``osc_h_power`` is the mesh-size power of the oscillation in RHS; the
    lower energy bound always uses power one.
    """

    _object_type = "benchmark_config"
    _fields = (
        "problem",
        "density",
        "f",
        "u_exact",
        "grad_exact",
        "sigma_exact",
        "dirichlet",
        "fidelity",
        "mesh",
        "k",
        "theta",
        "max_ndof",
        "poincare_constant",
        "reference_energy",
        "osc_h_power",
        "solver",
    )
    _required_fields = ("problem", "density", "mesh", "k", "theta", "max_ndof")

    def _init_volatile_fields_validate(self, items):
        super()._init_volatile_fields_validate(items)
        values = dict(items)
        util.validate_range(
            "theta", values["theta"], lower=0.0, upper=1.0, lower_inclusive=False
        )
        util.validate_range(
            "k", values["k"], lower=0, upper=settings.MAX_POLYNOMIAL_DEGREE
        )
        if int(values["k"]) != values["k"]:
            raise error.ValidationError(f"k must be an integer, got {values['k']!r}")
        util.validate_range("max_ndof", values["max_ndof"], lower=1)

    @property
    def quadrature_degree(self) -> int:
        return _quadrature_degree(self.density.params.p, self.k)

    def replace(self, **overrides) -> "BenchmarkConfig":
        data = self.to_dict()
        data.update({key: value for key, value in overrides.items() if value is not None})
        return BenchmarkConfig(**data)


def benchmark(
    problem: Union[ProblemId, str],
    *,
    k: int = 0,
    theta: float = 0.5,
    max_ndof: int = 30000,
    poincare_constant: Optional[float] = None,
    alpha: float = TWOWELL_ALPHA,
    solver: Optional[SolverConfig] = None,
    mesh: Optional[Mesh] = None,
) -> BenchmarkConfig:
    """
    Builds the configuration of a shipped benchmark.

    Parameters
    ----------
    problem
        Benchmark id.
    k
        Polynomial degree.
    theta
        Dörfler bulk parameter; ``1`` refines uniformly.
    max_ndof
        The loop stops once the degrees of freedom exceed this value.
    poincare_constant
        Overrides the benchmark's ``C_P``.
    alpha
        Weight of the two-well quadratic term.
    mesh
        Replaces the benchmark's initial mesh.

    Returns
    -------
        The configuration.

    Raises
    ------
    error.ConfigurationError
        Thrown for an unknown problem id.
    """
    try:
        problem = ProblemId(problem)
    except ValueError:
        raise error.ConfigurationError(
            f"Unknown problem '{problem}'",
            details={"known": [str(item) for item in ProblemId]},
        )

    common = dict(
        problem=problem,
        k=k,
        theta=theta,
        max_ndof=max_ndof,
        solver=solver or SolverConfig(),
        osc_h_power=1.0,
        dirichlet=None,
        fidelity=None,
        u_exact=None,
        grad_exact=None,
        sigma_exact=None,
    )

    if problem is ProblemId.PLAPLACE_SQUARE:
        data = dict(
            density=plaplace(4.0),
            f=_plaplace_square_f,
            u_exact=_plaplace_square_u,
            grad_exact=_plaplace_square_grad,
            sigma_exact=_plaplace_square_sigma,
            mesh=square_mesh(),
            poincare_constant=1.0,
            reference_energy=PLAPLACE_SQUARE_ENERGY,
            # smooth solution: the estimator uses the higher-order oscillation,
            # never below h¹ so k = 0 keeps the lowest-order term
            osc_h_power=float(max(k, 1)),
        )
    elif problem is ProblemId.PLAPLACE_LSHAPE:
        data = dict(
            density=plaplace(4.0),
            f=1.0,
            mesh=lshape_mesh(),
            poincare_constant=1.0,
            reference_energy=PLAPLACE_LSHAPE_ENERGY,
        )
    elif problem in (ProblemId.ODP_SQUARE, ProblemId.ODP_LSHAPE):
        square = problem is ProblemId.ODP_SQUARE
        lam = ODP_LAMBDA_SQUARE if square else ODP_LAMBDA_LSHAPE
        xi1 = np.sqrt(2.0 * lam * ODP_MU1 / ODP_MU2)
        data = dict(
            density=optimal_design(ODP_MU1, ODP_MU2, xi1, ODP_MU2 * xi1 / ODP_MU1),
            f=1.0,
            mesh=square_mesh() if square else lshape_mesh(),
            # p = 2 on a convex domain
            poincare_constant=1.0 / np.pi if square else 1.0,
            reference_energy=ODP_SQUARE_ENERGY if square else ODP_LSHAPE_ENERGY,
        )
    else:
        data = dict(
            density=two_well(-TWOWELL_DIRECTION, TWOWELL_DIRECTION),
            f=0.0,
            u_exact=twowell_u,
            grad_exact=twowell_grad,
            sigma_exact=twowell_sigma,
            dirichlet=twowell_u,
            fidelity=FidelityTerm(twowell_g(alpha), alpha),
            mesh=twowell_mesh(),
            poincare_constant=1.0,
            reference_energy=twowell_exact_energy(alpha),
        )

    common.update(data)
    if poincare_constant is not None:
        util.validate_range(
            "poincare_constant", poincare_constant, lower=0.0, lower_inclusive=False
        )
        common["poincare_constant"] = float(poincare_constant)
    if mesh is not None:
        common["mesh"] = mesh
    return BenchmarkConfig(**common)


def benchmark_library(**kwargs) -> Dict[ProblemId, BenchmarkConfig]:
    """Returns the five shipped benchmarks with shared run settings."""
    return {problem: benchmark(problem, **kwargs) for problem in ProblemId}
