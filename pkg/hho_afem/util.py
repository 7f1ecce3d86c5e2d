import logging
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

import hho_afem
from hho_afem import error

HHO_AFEM_LOG_LEVEL = os.environ.get("HHO_AFEM_LOG_LEVEL")
LOG_LEVELS = ["DEBUG", "INFO"]
logger = logging.getLogger("hho-afem")


def _console_log_level() -> Optional[str]:
    if str(hho_afem.log_level).upper() in LOG_LEVELS:
        return str(hho_afem.log_level).upper()
    elif str(HHO_AFEM_LOG_LEVEL).upper() in LOG_LEVELS:
        return str(HHO_AFEM_LOG_LEVEL).upper()
    else:
        return None


def log_debug(message, **params):
    msg = logfmt(dict(message=message, **params))
    if _console_log_level() == "DEBUG":
        print(msg, file=sys.stderr)
    logger.debug(msg)


def log_info(message, **params):
    msg = logfmt(dict(message=message, **params))
    if _console_log_level() in LOG_LEVELS:
        print(msg, file=sys.stderr)
    logger.info(msg)


def logfmt(props):
    def fmt(key, val):
        if hasattr(val, "decode"):
            val = val.decode("utf-8")
        if isinstance(val, (float, np.floating)):
            val = f"{float(val):.6e}"
        if not isinstance(val, str):
            val = str(val)
        if re.search(r"\s", val):
            val = repr(val)
        if re.search(r"\s", key):
            key = repr(key)
        return "{key}={val}".format(key=key, val=val)

    return " ".join([fmt(key, val) for key, val in sorted(props.items())])


def validate_argument_value(key: str, value: any, is_required: bool) -> any:
    if is_required and value is None:
        raise error.ValidationError(f"{key} is required")
    return value


def validate_arguments_require_all(items: List[Tuple[str, any]]):
    """Validates that all of the provided key-value fields are set.

    Parameters
    ----------
    items
        Key-value tuples that represent required fields.
    """
    for key, value in iter(items):
        validate_argument_value(key=key, value=value, is_required=True)


def validate_range(
    key: str,
    value: Union[int, float],
    *,
    lower: Optional[float] = None,
    upper: Optional[float] = None,
    lower_inclusive: bool = True,
    upper_inclusive: bool = True,
) -> Union[int, float]:
    """Validates that a numeric argument lies in an interval.

    Parameters
    ----------
    key
        Argument name used in the error message.
    value
        The value to check.
    lower, upper
        Interval end points; ``None`` leaves the side open-ended.
    lower_inclusive, upper_inclusive
        Whether the end points themselves are admissible.

    Raises
    ------
    error.ValidationError
        Thrown when the value is missing or outside the interval.
    """
    validate_argument_value(key=key, value=value, is_required=True)

    too_low = lower is not None and (
        value < lower if lower_inclusive else value <= lower
    )
    too_high = upper is not None and (
        value > upper if upper_inclusive else value >= upper
    )
    if too_low or too_high:
        left = "[" if lower_inclusive else "("
        right = "]" if upper_inclusive else ")"
        raise error.ValidationError(
            f"{key}={value} is outside {left}{lower}, {upper}{right}"
        )

    return value


def resolve_num_threads() -> int:
    requested = hho_afem.num_threads
    if not requested:
        requested = hho_afem.config.num_threads
    if not requested:
        requested = os.cpu_count() or 1
    return max(int(requested), 1)


def parallel_map(
    function: Callable[[np.ndarray], np.ndarray],
    items: np.ndarray,
    *,
    min_chunk: int = 4096,
) -> np.ndarray:
    """Applies a vectorized function to row chunks of ``items`` on a thread pool.

    The chunks are concatenated in their original order, so results do not
    depend on the number of workers.

    Parameters
    ----------
    function
        Maps an array of rows to an array with the same leading length.
    items
        Input rows.
    min_chunk
        Inputs shorter than this run on the calling thread.
    """
    n = len(items)
    workers = resolve_num_threads()
    if workers == 1 or n <= min_chunk:
        return function(items)

    bounds = np.linspace(0, n, min(workers, -(-n // min_chunk)) + 1).astype(int)
    chunks = [items[a:b] for a, b in zip(bounds[:-1], bounds[1:])]

    with ThreadPoolExecutor(max_workers=workers) as executor:
        results = list(executor.map(function, chunks))

    return np.concatenate(results, axis=0)


def evaluate_field(
    field: Union[Callable, float, int, None],
    x: np.ndarray,
    y: np.ndarray,
    *,
    components: Optional[int] = None,
) -> np.ndarray:
    """Evaluates scalar or vector data at points with coordinates ``x``, ``y``.

    Constants and ``None`` (zero) are broadcast to the point shape. Vector
    data is returned with the components in the last axis.
    """
    shape = np.shape(x) if components is None else np.shape(x) + (components,)

    if field is None:
        return np.zeros(shape)
    if callable(field):
        values = np.asarray(field(x, y), dtype=float)
        if components is not None and values.shape[0] == components:
            if values.shape != shape:
                values = np.moveaxis(values, 0, -1)
        return np.array(np.broadcast_to(values, shape))

    return np.full(shape, float(field)) if components is None else np.array(
        np.broadcast_to(np.asarray(field, dtype=float), shape)
    )


def least_squares_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Slope of the least-squares line through ``(log x, log y)``."""
    log_x = np.log(np.asarray(x, dtype=float))
    log_y = np.log(np.asarray(y, dtype=float))
    slope, _ = np.polyfit(log_x, log_y, 1)
    return float(slope)
