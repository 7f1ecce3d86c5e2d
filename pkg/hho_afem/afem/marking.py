from typing import Sequence

import numpy as np

from hho_afem import error, util
from hho_afem.abstract.hho_object import HHOObject


class Extrapolation(HHOObject):
    _object_type = "extrapolation"
    _fields = ("value", "degenerate")
    _required_fields = ("value", "degenerate")


def dorfler_mark(eta: Sequence[float], theta: float) -> np.ndarray:
    """
    Selects a minimal set of triangles carrying a ``theta`` share of ``Σ η``.

    Parameters
    ----------
    eta
        Nonnegative refinement indicators, one per triangle.
    theta
        Bulk parameter in ``(0, 1]``.

    Returns
    -------
        Sorted indices of the marked triangles. Among equal indicators the
        smaller index is taken first. Empty when all indicators vanish.
    """
    util.validate_range("theta", theta, lower=0.0, upper=1.0, lower_inclusive=False)
    eta = np.asarray(eta, dtype=float)
    if eta.ndim != 1:
        raise error.ValidationError("eta must be one-dimensional")
    if not np.all(np.isfinite(eta)) or (eta < 0.0).any():
        raise error.ValidationError("eta must be finite and nonnegative")

    if eta.size == 0 or not (eta > 0.0).any():
        return np.zeros(0, dtype=np.int64)

    order = np.lexsort((np.arange(len(eta)), -eta))
    cumulative = np.cumsum(eta[order])
    count = int(np.searchsorted(cumulative, theta * cumulative[-1], side="left")) + 1
    return np.sort(order[:count])


def aitken_extrapolate(values: Sequence[float]) -> Extrapolation:
    """
    Δ²-extrapolation of the last three values of a sequence.

    A vanishing second difference flags the result as degenerate and
    returns the last value.
    """
    values = np.asarray(values, dtype=float)
    if len(values) < 3:
        raise error.ValidationError("Aitken extrapolation needs at least three values")

    x0, x1, x2 = values[-3:]
    denominator = x2 - 2.0 * x1 + x0
    if abs(denominator) <= 1e-14 * max(abs(x0), abs(x1), abs(x2), 1e-300):
        return Extrapolation(value=float(x2), degenerate=True)

    return Extrapolation(value=float(x2 - (x2 - x1) ** 2 / denominator), degenerate=False)
