from __future__ import annotations

import abc
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from hho_afem import error, util
from hho_afem.fem import settings


@dataclass(frozen=True)
class DensityParams:
    """Growth ``c1|A|^p − c4 ≤ W(A) ≤ c2|A|^p + c5`` and convexity control
    ``|DW(A) − DW(B)|^r ≤ c3 (1 + |A|^s + |B|^s)(W(B) − W(A) − DW(A):(B − A))``.
    """

    p: float
    r: float
    s: float
    c1: float
    c2: float
    c3: float
    c4: float = 0.0
    c5: float = 0.0

    def __post_init__(self):
        util.validate_range("p", self.p, lower=1.0, lower_inclusive=False)
        util.validate_range("r", self.r, lower=1.0, lower_inclusive=False)
        util.validate_range("s", self.s, lower=0.0)

    @property
    def p_conjugate(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def r_conjugate(self) -> float:
        return self.r / (self.r - 1.0)

    @property
    def t(self) -> float:
        return 1.0 + self.s / self.p


def _norm(a: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("...i,...i->...", a, a))


def _outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., :, None] * b[..., None, :]


_IDENTITY = np.eye(2)


class Density(abc.ABC):
    """Convex C¹ energy density on 2D gradients.

    All evaluations are vectorized over leading axes: ``W`` maps ``(..., 2)``
    to ``(...)``, ``DW`` to ``(..., 2)`` and ``D2W`` to ``(..., 2, 2)``.
    """

    label: str = ""
    params: DensityParams

    @abc.abstractmethod
    def W(self, a: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @abc.abstractmethod
    def DW(self, a: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @abc.abstractmethod
    def D2W(self, a: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def Wstar(self, g: np.ndarray) -> np.ndarray:
        return conjugate_numeric(self, g)

    def conjugate_starts(self, g: np.ndarray) -> List[np.ndarray]:
        return [np.zeros_like(g), np.array(g, dtype=float)]

    def __repr__(self):
        return f"{self.__class__.__name__}({self.params})"


def _plaplace_control(p: float) -> float:
    """Convexity-control constant of ``|a|^p / p``.

    ``p`` is tight for the integers 2 to 6. Below 2 the constant follows from
    the uniform convexity of the conjugate. Elsewhere an inflated value, never
    below ``p``, is used.
    """
    if p < 2.0:
        q = p / (p - 1.0)
        return q * 2.0 ** (q - 2.0)
    if p == int(p) and p <= 6.0:
        return p
    return max(p, 1.0 + max(1.0, p - 2.0) ** 2)


class PLaplaceDensity(Density):
    def __init__(self, p: float):
        util.validate_range("p", p, lower=1.0, lower_inclusive=False)
        self.p = float(p)
        self.label = f"plaplace(p={p:g})"
        if p >= 2.0:
            r, s = 2.0, p - 2.0
        else:
            r, s = p / (p - 1.0), 0.0
        self.params = DensityParams(
            p=self.p, r=r, s=s, c1=1.0 / p, c2=1.0 / p, c3=_plaplace_control(self.p)
        )

    def W(self, a):
        return _norm(a) ** self.p / self.p

    def DW(self, a):
        a = np.asarray(a, dtype=float)
        n = _norm(a)
        scale = np.where(n > 0.0, np.maximum(n, 1e-300) ** (self.p - 2.0), 0.0)
        return scale[..., None] * a

    def D2W(self, a):
        a = np.asarray(a, dtype=float)
        p = self.p
        n = np.maximum(_norm(a), np.finfo(float).tiny)
        if p == 2.0:
            return np.broadcast_to(_IDENTITY, a.shape + (2,)).copy()

        if p < 2.0:
            n = np.maximum(n, 1e-12)
        iso = n ** (p - 2.0)
        aniso = (p - 2.0) * n ** (p - 4.0)
        hess = iso[..., None, None] * _IDENTITY + aniso[..., None, None] * _outer(a, a)
        return np.where((_norm(a) > 0.0)[..., None, None], hess, 0.0)

    def Wstar(self, g):
        q = self.params.p_conjugate
        return _norm(g) ** q / q


class OptimalDesignDensity(Density):
    """Convexified two-material density ``W(a) = ψ(|a|)``.

    ψ is quadratic with modulus μ₂ up to ξ₁, affine on [ξ₁, ξ₂] and quadratic
    with modulus μ₁ beyond ξ₂.
    """

    def __init__(self, mu1: float, mu2: float, xi1: float, xi2: float):
        util.validate_range("mu1", mu1, lower=0.0, lower_inclusive=False)
        util.validate_range("mu2", mu2, lower=mu1, lower_inclusive=False)
        util.validate_range("xi1", xi1, lower=0.0, lower_inclusive=False)
        util.validate_range("xi2", xi2, lower=xi1, lower_inclusive=False)
        if abs(xi1 * mu2 - xi2 * mu1) > 1e-12 * max(1.0, xi1 * mu2):
            raise error.ValidationError(
                f"optimal design requires xi1*mu2 == xi2*mu1, got "
                f"{xi1 * mu2!r} != {xi2 * mu1!r}"
            )

        self.mu1, self.mu2 = float(mu1), float(mu2)
        self.xi1, self.xi2 = float(xi1), float(xi2)
        self.label = f"optimal_design(mu1={mu1:g}, mu2={mu2:g}, xi1={xi1:g})"
        self.params = DensityParams(
            p=2.0, r=2.0, s=0.0, c1=mu1 / 2.0, c2=mu2 / 2.0, c3=2.0 * mu2
        )

    def psi(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        mu1, mu2, xi1, xi2 = self.mu1, self.mu2, self.xi1, self.xi2
        return np.where(
            xi <= xi1,
            mu2 * xi**2 / 2.0,
            np.where(
                xi <= xi2,
                xi1 * mu2 * (xi - xi1 / 2.0),
                mu1 * xi**2 / 2.0 - xi1 * mu2 * (xi1 / 2.0 - xi2 / 2.0),
            ),
        )

    def psi_prime(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        return np.where(
            xi <= self.xi1,
            self.mu2 * xi,
            np.where(xi <= self.xi2, self.xi1 * self.mu2, self.mu1 * xi),
        )

    def W(self, a):
        return self.psi(_norm(a))

    def DW(self, a):
        a = np.asarray(a, dtype=float)
        n = _norm(a)
        # ψ'(ξ)/ξ, continuous extension μ₂ at the origin
        ratio = np.where(
            n <= self.xi1,
            self.mu2,
            np.where(
                n <= self.xi2,
                self.xi1 * self.mu2 / np.maximum(n, self.xi1),
                self.mu1,
            ),
        )
        return ratio[..., None] * a

    def D2W(self, a):
        a = np.asarray(a, dtype=float)
        n = _norm(a)
        safe = np.maximum(n, self.xi1)
        unit = a / safe[..., None]
        plateau = (self.xi1 * self.mu2 / safe)[..., None, None] * (
            _IDENTITY - _outer(unit, unit)
        )
        inner = self.mu2 * np.broadcast_to(_IDENTITY, plateau.shape)
        outer = self.mu1 * np.broadcast_to(_IDENTITY, plateau.shape)
        return np.where(
            (n <= self.xi1)[..., None, None],
            inner,
            np.where((n <= self.xi2)[..., None, None], plateau, outer),
        )

    def phi(self, tau: np.ndarray) -> np.ndarray:
        """Conjugate ``ψ*`` of the radial profile."""
        tau = np.asarray(tau, dtype=float)
        return np.where(
            tau <= self.mu2 * self.xi1,
            tau**2 / (2.0 * self.mu2),
            tau**2 / (2.0 * self.mu1) + self.xi1 * self.mu2 * (self.xi1 - self.xi2) / 2.0,
        )

    def Wstar(self, g):
        return self.phi(_norm(g))

    def conjugate_starts(self, g):
        g = np.asarray(g, dtype=float)
        return [g / self.mu2, g / self.mu1]

    def volume_fraction(self, xi: np.ndarray) -> np.ndarray:
        """Ramp ``Λ(ξ)``: 0 below ξ₁, 1 above ξ₂, linear in between."""
        xi = np.asarray(xi, dtype=float)
        return np.clip((xi - self.xi1) / (self.xi2 - self.xi1), 0.0, 1.0)


class TwoWellDensity(Density):
    """Convex envelope of ``|F − F₁|²|F − F₂|²``; zero on the segment [F₁, F₂]."""

    def __init__(self, F1, F2):
        F1 = np.asarray(F1, dtype=float)
        F2 = np.asarray(F2, dtype=float)
        if F1.shape != (2,) or F2.shape != (2,):
            raise error.ValidationError("wells must be vectors in R^2")
        if np.allclose(F1, F2, rtol=0.0, atol=1e-14):
            raise error.ValidationError("two-well density requires F1 != F2")

        self.F1, self.F2 = F1, F2
        self.A = (F2 - F1) / 2.0
        self.B = (F1 + F2) / 2.0
        self.A2 = float(self.A @ self.A)
        B2 = float(self.B @ self.B)

        kappa = 8.0 * max(float(F1 @ F1) ** 2, float(F2 @ F2) ** 2)
        control = 32.0 * max(1.0, self.A2, self.A2 / 2.0 + 2.0 * B2)
        self.label = f"two_well(F1={F1.tolist()}, F2={F2.tolist()})"
        self.params = DensityParams(
            p=4.0, r=2.0, s=2.0, c1=1.0 / 8.0, c2=8.0, c3=control, c4=kappa, c5=kappa
        )

    def _split(self, F):
        X = np.asarray(F, dtype=float) - self.B
        excess = np.einsum("...i,...i->...", X, X) - self.A2
        along = X @ self.A
        return X, excess, along

    def W(self, F):
        X, excess, along = self._split(F)
        return np.maximum(excess, 0.0) ** 2 + 4.0 * (
            self.A2 * (excess + self.A2) - along**2
        )

    def DW(self, F):
        X, excess, along = self._split(F)
        return 4.0 * np.maximum(excess, 0.0)[..., None] * X + 8.0 * (
            self.A2 * X - along[..., None] * self.A
        )

    def D2W(self, F):
        X, excess, _ = self._split(F)
        active = (excess > 0.0)[..., None, None]
        flat = 8.0 * (self.A2 * _IDENTITY - np.outer(self.A, self.A))
        curved = 4.0 * excess[..., None, None] * _IDENTITY + 8.0 * _outer(X, X)
        return flat + np.where(active, curved, 0.0)

    def _conjugate_maximizer(self, g):
        """Maximizer of ``g·F − W(F)`` from the scalar equation for ``m = (|X|² − |A|²)₊``.

        With ``X = F − B = s e + t e⊥`` the first-order conditions give
        ``s = gₛ/(4m)`` and ``t = gₜ/(4m + 8|A|²)``; ``m`` is the root of an
        increasing function and is bracketed in log space.
        """
        g = np.asarray(g, dtype=float)
        a2 = self.A2
        e = self.A / np.sqrt(a2)
        e_perp = np.array([-e[1], e[0]])
        gs = g @ e
        gt = g @ e_perp

        def f(m):
            return m + a2 - gs**2 / (16.0 * m**2) - gt**2 / (4.0 * m + 8.0 * a2) ** 2

        lo = np.full(gs.shape, 1e-150)
        hi = 1.0 + _norm(g)
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            flat = f(lo) >= 0.0
            for _ in range(100):
                mid = np.sqrt(lo * hi)
                positive = f(mid) >= 0.0
                hi = np.where(positive, mid, hi)
                lo = np.where(positive, lo, mid)
            m = np.where(flat, 0.0, hi)
            s = np.where(flat, 0.0, gs / (4.0 * np.where(flat, 1.0, m)))
        t = gt / (4.0 * m + 8.0 * a2)
        return self.B + s[..., None] * e + t[..., None] * e_perp

    def conjugate_starts(self, g):
        g = np.asarray(g, dtype=float)
        wells = [np.broadcast_to(w, g.shape).copy() for w in (self.F1, self.F2, self.B)]
        return [self._conjugate_maximizer(g)] + wells


def plaplace(p: float) -> PLaplaceDensity:
    return PLaplaceDensity(p)


def optimal_design(mu1: float, mu2: float, xi1: float, xi2: float) -> OptimalDesignDensity:
    return OptimalDesignDensity(mu1, mu2, xi1, xi2)


def two_well(F1, F2) -> TwoWellDensity:
    return TwoWellDensity(F1, F2)


def volume_fraction(density: OptimalDesignDensity, xi: np.ndarray) -> np.ndarray:
    if not isinstance(density, OptimalDesignDensity):
        raise error.ValidationError("volume fraction is defined for optimal design only")
    return density.volume_fraction(xi)


def _maximize_concave(
    density: Density,
    g: np.ndarray,
    start: np.ndarray,
    *,
    tol: float,
    max_iterations: int,
):
    """Damped Newton for ``min_A W(A) − g·A`` on rows of ``g``.

    Levenberg regularization ``μ = |∇|`` keeps steps bounded where ``D2W``
    is singular; Armijo backtracking halves the step.
    """
    A = np.array(start, dtype=float)
    scale = np.maximum(1.0, _norm(g))

    def objective(X, G):
        return density.W(X) - np.einsum("...i,...i->...", G, X)

    for _ in range(max_iterations):
        residual = density.DW(A) - g
        norm = _norm(residual)
        active = norm > tol * scale
        if not active.any():
            break

        idx = np.flatnonzero(active)
        A_act, g_act, r_act = A[idx], g[idx], residual[idx]
        hess = density.D2W(A_act) + norm[idx, None, None] * _IDENTITY
        step = -np.linalg.solve(hess, r_act[..., None])[..., 0]

        phi0 = objective(A_act, g_act)
        slope = np.einsum("ij,ij->i", r_act, step)
        t = np.ones(len(idx))
        accepted = np.zeros(len(idx), dtype=bool)

        trial = A_act + step
        newton_ok = _norm(density.DW(trial) - g_act) < 0.5 * norm[idx]
        accepted |= newton_ok
        for _ in range(60):
            trial = A_act + t[:, None] * step
            armijo = objective(trial, g_act) <= phi0 + settings.ARMIJO_PARAMETER * t * slope
            accepted |= armijo
            pending = ~accepted
            if not pending.any():
                break
            t = np.where(pending, 0.5 * t, t)

        t = np.where(accepted, t, 0.0)
        A[idx] = A_act + t[:, None] * step

    residual = _norm(density.DW(A) - g)
    value = np.einsum("...i,...i->...", g, A) - density.W(A)
    return value, residual / scale


def conjugate_numeric(
    density: Density,
    g: np.ndarray,
    tol: float = settings.CONJUGATE_TOLERANCE,
    *,
    max_iterations: int = settings.CONJUGATE_MAX_ITERATIONS,
    starts: Optional[List[np.ndarray]] = None,
) -> np.ndarray:
    """Evaluates ``W*(g) = sup_A g·A − W(A)`` pointwise by multi-start Newton.

    Parameters
    ----------
    density
        Convex density with superlinear growth.
    g
        Points with shape ``(..., 2)``.
    tol
        Gradient-norm tolerance relative to ``max(1, |g|)``.

    Raises
    ------
    error.ConvergenceError
        Thrown when a point stays above the accept tolerance after the cap;
        ``best_value`` carries the best values found.
    """
    g = np.asarray(g, dtype=float)
    shape = g.shape[:-1]
    flat = g.reshape(-1, 2)

    def solve(chunk: np.ndarray) -> np.ndarray:
        best = np.full(len(chunk), -np.inf)
        best_residual = np.full(len(chunk), np.inf)
        initial = starts if starts is not None else density.conjugate_starts(chunk)
        for start in initial:
            start = np.broadcast_to(np.asarray(start, dtype=float), chunk.shape)
            value, residual = _maximize_concave(
                density, chunk, start, tol=tol, max_iterations=max_iterations
            )
            # near-equal values go to the smaller residual
            slack = np.where(np.isfinite(best), 1e-14 * (1.0 + np.abs(best)), 0.0)
            better = (value > best + slack) | (
                (value >= best - slack) & (residual < best_residual)
            )
            best = np.where(better, value, best)
            best_residual = np.where(better, residual, best_residual)
        return np.column_stack([best, best_residual])

    result = util.parallel_map(solve, flat)
    values, residuals = result[:, 0], result[:, 1]

    failed = residuals > settings.CONJUGATE_ACCEPT_TOLERANCE
    if failed.any():
        raise error.ConvergenceError(
            f"Conjugate evaluation did not converge at {int(failed.sum())} points",
            details={"max_residual": float(residuals.max())},
            best_value=values.reshape(shape),
            iterations=max_iterations,
        )
    if residuals.size and residuals.max() > tol:
        util.log_debug(
            "Conjugate accepted above tolerance", max_residual=float(residuals.max())
        )

    return values.reshape(shape)
