"""Property suites behind the ``verify`` subcommand.

Each suite returns a ``SuiteResult``; ``run_suites`` runs them in a fixed
order with a seeded generator so repeated runs agree.
"""
from __future__ import annotations

import itertools
from typing import Callable, Dict, List, Optional

import numpy as np

from hho_afem import util
from hho_afem.abstract.hho_object import HHOObject
from hho_afem.afem.benchmarks import (
    ODP_LAMBDA_SQUARE,
    ODP_MU1,
    ODP_MU2,
    TWOWELL_DIRECTION,
    lshape_mesh,
    square_mesh,
)
from hho_afem.afem.marking import aitken_extrapolate, dorfler_mark
from hho_afem.fem.bases import l2_project_rt, monomial_exponents
from hho_afem.fem.hho import HHOSpace, interpolate, reconstruct_gradient
from hho_afem.fem.mesh import uniform_refine
from hho_afem.model.density import (
    Density,
    TwoWellDensity,
    optimal_design,
    plaplace,
    two_well,
)


class SuiteResult(HHOObject):
    _object_type = "suite_result"
    _fields = ("name", "passed", "detail")
    _required_fields = ("name", "passed")


def _random_polynomial(rng: np.random.Generator, degree: int):
    exponents = monomial_exponents(degree)
    coefficients = rng.normal(size=len(exponents))

    def value(x, y):
        return sum(c * x**a * y**b for c, (a, b) in zip(coefficients, exponents))

    def gradient(x, y):
        dx = sum(c * a * x ** max(a - 1, 0) * y**b for c, (a, b) in zip(coefficients, exponents))
        dy = sum(c * b * x**a * y ** max(b - 1, 0) for c, (a, b) in zip(coefficients, exponents))
        return np.stack(np.broadcast_arrays(dx, dy), axis=-1)

    return value, gradient


def commutativity(
    rng: np.random.Generator,
    *,
    degrees=(0, 1, 2, 3),
    levels: int = 3,
    samples: int = 5,
    tol: float = 1e-11,
) -> SuiteResult:
    """``R(I v) = Π_Σ ∇v`` for polynomial ``v`` of degree ``k + 3``."""
    worst = 0.0
    for initial in (square_mesh(), lshape_mesh()):
        mesh = initial
        for _ in range(levels):
            for k in degrees:
                space = HHOSpace(mesh, k=k)
                for _ in range(samples):
                    v, grad_v = _random_polynomial(rng, k + 3)
                    reconstructed = reconstruct_gradient(space, interpolate(space, v))
                    projected = l2_project_rt(mesh, grad_v, k)
                    diff = reconstructed.coefficients - projected
                    error = np.sqrt(np.einsum("ci,cij,cj->", diff, space.mass, diff))
                    g_q = space.evaluate(grad_v, components=2)
                    norm = np.sqrt(np.sum(space.integrate(np.einsum("cqi,cqi->cq", g_q, g_q))))
                    worst = max(worst, error / max(norm, 1e-300))
            mesh = uniform_refine(mesh)

    return SuiteResult(
        name="commutativity", passed=bool(worst <= tol), detail={"max_relative_error": worst}
    )


def verification_densities() -> Dict[str, Density]:
    xi1 = np.sqrt(2.0 * ODP_LAMBDA_SQUARE * ODP_MU1 / ODP_MU2)
    return {
        "plaplace-4": plaplace(4.0),
        "optimal-design": optimal_design(ODP_MU1, ODP_MU2, xi1, ODP_MU2 * xi1 / ODP_MU1),
        "two-well": two_well(-TWOWELL_DIRECTION, TWOWELL_DIRECTION),
    }


def density_properties(
    rng: np.random.Generator,
    density: Density,
    *,
    samples: int = 10000,
    name: Optional[str] = None,
) -> SuiteResult:
    """Growth, convexity control, Fenchel identity and finite differences of ``DW``."""
    params = density.params
    A = rng.normal(scale=2.0, size=(samples, 2))
    B = rng.normal(scale=2.0, size=(samples, 2))
    norm_a = np.linalg.norm(A, axis=1)
    norm_b = np.linalg.norm(B, axis=1)
    W_a, W_b = density.W(A), density.W(B)
    DW_a, DW_b = density.DW(A), density.DW(B)
    slack = 1e-10 * (1.0 + np.abs(W_a))

    lower = params.c1 * norm_a**params.p - params.c4
    upper = params.c2 * norm_a**params.p + params.c5
    growth = bool(np.all(lower <= W_a + slack) and np.all(W_a <= upper + slack))

    bregman = W_b - W_a - np.einsum("ij,ij->i", DW_a, B - A)
    weight = 1.0 + norm_a**params.s + norm_b**params.s
    lhs = np.linalg.norm(DW_a - DW_b, axis=1) ** params.r
    rhs = params.c3 * weight * np.maximum(bregman, 0.0)
    control = bool(np.all(lhs <= rhs + 1e-9 * (1.0 + lhs)))

    # the numeric conjugate is slower; a subsample suffices
    n_fenchel = samples if not isinstance(density, TwoWellDensity) else min(samples, 500)
    fenchel_tol = 1e-8 if isinstance(density, TwoWellDensity) else 1e-10
    pairing = np.einsum("ij,ij->i", A[:n_fenchel], DW_a[:n_fenchel])
    fenchel_error = np.abs(W_a[:n_fenchel] + density.Wstar(DW_a[:n_fenchel]) - pairing)
    fenchel = float(np.max(fenchel_error / (1.0 + np.abs(pairing))))

    h = 1e-6
    fd = np.stack(
        [
            (density.W(A + h * e) - density.W(A - h * e)) / (2.0 * h)
            for e in np.eye(2)
        ],
        axis=1,
    )
    fd_error = float(
        np.max(np.linalg.norm(fd - DW_a, axis=1) / np.maximum(1.0, np.linalg.norm(DW_a, axis=1)))
    )

    return SuiteResult(
        name=f"density:{name or density.label}",
        passed=bool(growth and control and fenchel <= fenchel_tol and fd_error <= 1e-6),
        detail={
            "growth": growth,
            "convexity_control": control,
            "fenchel_error": fenchel,
            "finite_difference_error": fd_error,
        },
    )


def minimal_bulk_size(eta: np.ndarray, theta: float) -> int:
    """Smallest subset size reaching the bulk criterion, by exhaustive search."""
    total = float(np.sum(eta))
    if total == 0.0:
        return 0
    for size in range(1, len(eta) + 1):
        for subset in itertools.combinations(range(len(eta)), size):
            if np.sum(eta[list(subset)]) >= theta * total:
                return size
    return len(eta)


def dorfler_brute_force(rng: np.random.Generator, *, trials: int = 200) -> SuiteResult:
    mismatches = 0
    for _ in range(trials):
        eta = rng.random(int(rng.integers(1, 13)))
        theta = float(rng.uniform(0.05, 1.0))
        marked = dorfler_mark(eta, theta)
        bulk = np.sum(eta[marked]) >= theta * np.sum(eta) * (1.0 - 1e-12)
        if not bulk or len(marked) != minimal_bulk_size(eta, theta):
            mismatches += 1
    return SuiteResult(
        name="dorfler", passed=mismatches == 0, detail={"trials": trials, "mismatches": mismatches}
    )


def aitken_geometric(rng: np.random.Generator) -> SuiteResult:
    limit, c, q = rng.normal(), rng.normal(), rng.uniform(0.2, 0.8)
    sequence = [limit + c * q**n for n in range(6)]
    result = aitken_extrapolate(sequence)
    error = abs(result.value - limit)
    return SuiteResult(
        name="aitken",
        passed=bool(not result.degenerate and error <= 1e-10 * (1.0 + abs(limit))),
        detail={"error": error},
    )


def run_suites(*, seed: int = 0, quick: bool = False) -> List[SuiteResult]:
    """Runs every suite; ``quick`` shrinks sample sizes for smoke checks."""
    rng = np.random.default_rng(seed)
    suites: List[Callable[[], SuiteResult]] = [
        lambda: commutativity(rng, levels=2 if quick else 3, samples=2 if quick else 5),
    ]
    for name, density in verification_densities().items():
        suites.append(
            lambda name=name, density=density: density_properties(
                rng, density, samples=500 if quick else 10000, name=name
            )
        )
    suites += [
        lambda: dorfler_brute_force(rng, trials=50 if quick else 200),
        lambda: aitken_geometric(rng),
    ]

    results = []
    for suite in suites:
        result = suite()
        util.log_info("Verification suite", name=result.name, passed=result.passed)
        results.append(result)
    return results
