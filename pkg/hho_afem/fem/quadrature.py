from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

from hho_afem import error
from hho_afem.fem import settings


class QuadratureRule:
    """Quadrature rule with weights normalized to sum to one.

    ``points`` holds barycentric coordinates: three columns on triangles,
    two on edges. Integrals over an element follow as ``measure * weights @
    values``.
    """

    def __init__(self, points: np.ndarray, weights: np.ndarray, degree: int):
        points = np.asarray(points, dtype=float)
        weights = np.asarray(weights, dtype=float)

        if len(points) != len(weights):
            raise error.ValidationError("points and weights differ in length")
        if not np.isclose(weights.sum(), 1.0, rtol=0.0, atol=1e-14):
            raise error.ValidationError(f"weights sum to {weights.sum()}, not 1")

        points.setflags(write=False)
        weights.setflags(write=False)
        self.points = points
        self.weights = weights
        self.degree = degree

    def __len__(self):
        return len(self.weights)

    @property
    def reference_points(self) -> np.ndarray:
        """Cartesian points on the reference element.

        Triangle vertices are (0,0), (1,0), (0,1); the edge is [0,1].
        """
        return self.points[:, 1:]

    def __repr__(self):
        return f"QuadratureRule(degree={self.degree}, points={len(self)})"


def _validate_degree(degree: int) -> int:
    if int(degree) != degree or degree < 0:
        raise error.QuadratureError(f"Invalid quadrature degree {degree}")
    if degree > settings.QUADRATURE_MAX_DEGREE:
        raise error.QuadratureError(
            f"Quadrature degree {degree} exceeds the supported maximum "
            f"{settings.QUADRATURE_MAX_DEGREE}"
        )
    return int(degree)


@lru_cache(maxsize=None)
def quad_rule_edge(degree: int) -> QuadratureRule:
    """Gauss–Legendre rule on [0,1] exact for polynomials of ``degree``."""
    degree = _validate_degree(degree)
    n = degree // 2 + 1

    nodes, weights = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (nodes + 1.0)

    return QuadratureRule(
        points=np.column_stack([1.0 - s, s]), weights=0.5 * weights, degree=degree
    )


@lru_cache(maxsize=None)
def quad_rule_triangle(degree: int) -> QuadratureRule:
    """Collapsed conical product rule on the reference triangle.

    The square [0,1]² is mapped onto the triangle by ``x = a(1-b), y = b``.
    Gauss–Legendre in ``a`` and Gauss–Jacobi with weight ``(1-b)`` in ``b``
    integrate total degree ``degree`` exactly with ``(degree//2 + 1)²``
    points.
    """
    degree = _validate_degree(degree)
    n = degree // 2 + 1

    a_nodes, a_weights = np.polynomial.legendre.leggauss(n)
    b_nodes, b_weights = roots_jacobi(n, 1.0, 0.0)

    a = 0.5 * (a_nodes + 1.0)
    b = 0.5 * (b_nodes + 1.0)
    aa, bb = np.meshgrid(a, b, indexing="ij")
    x = (aa * (1.0 - bb)).ravel()
    y = bb.ravel()

    # 1/2 and 1/4 from the interval maps, 2 to normalize by |T̂| = 1/2
    weights = np.outer(a_weights, b_weights).ravel() / 4.0
    weights = weights / weights.sum()

    return QuadratureRule(
        points=np.column_stack([1.0 - x - y, x, y]), weights=weights, degree=degree
    )
