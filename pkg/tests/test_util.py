import numpy as np
import pytest

import hho_afem
from hho_afem import error, util


@pytest.fixture(scope="function")
def sample_points():
    x = np.array([0.0, 0.5, 1.0])
    y = np.array([1.0, 0.25, 0.0])
    return x, y


def test_logfmt():
    line = util.logfmt({"message": "Solver done", "energy": 1.5, "iterations": 3})
    assert line == "energy=1.500000e+00 iterations=3 message='Solver done'"

    assert util.logfmt({"ok": np.float64(0.25)}) == "ok=2.500000e-01"


def test_validate_range():
    assert util.validate_range("theta", 0.5, lower=0.0, upper=1.0) == 0.5
    assert util.validate_range("theta", 1.0, lower=0.0, upper=1.0) == 1.0

    with pytest.raises(error.ValidationError):
        util.validate_range("theta", 0.0, lower=0.0, lower_inclusive=False)

    with pytest.raises(error.ValidationError):
        util.validate_range("k", 5, lower=0, upper=4)

    with pytest.raises(error.ValidationError):
        util.validate_range("k", None, lower=0)


def test_validate_arguments_require_all():
    util.validate_arguments_require_all([("a", 1), ("b", 0.0)])

    with pytest.raises(error.ValidationError):
        util.validate_arguments_require_all([("a", 1), ("b", None)])


class TestEvaluateField(object):
    def test_scalar_data(self, sample_points):
        x, y = sample_points
        np.testing.assert_array_equal(util.evaluate_field(None, x, y), np.zeros(3))
        np.testing.assert_array_equal(util.evaluate_field(2, x, y), np.full(3, 2.0))
        np.testing.assert_allclose(
            util.evaluate_field(lambda a, b: a * b, x, y), [0.0, 0.125, 0.0]
        )

    def test_vector_data(self, sample_points):
        x, y = sample_points
        last_axis = util.evaluate_field(
            lambda a, b: np.stack([a, b], axis=-1), x, y, components=2
        )
        first_axis = util.evaluate_field(
            lambda a, b: np.stack([a, b]), x, y, components=2
        )
        assert last_axis.shape == (3, 2)
        np.testing.assert_array_equal(last_axis, first_axis)
        np.testing.assert_array_equal(last_axis[:, 1], y)

        constant = util.evaluate_field([1.0, -2.0], x, y, components=2)
        np.testing.assert_array_equal(constant, np.tile([1.0, -2.0], (3, 1)))


def test_least_squares_slope():
    ndof = np.array([10.0, 100.0, 1000.0, 10000.0])
    assert util.least_squares_slope(ndof, 3.0 * ndof**-1.5) == pytest.approx(-1.5)


def test_parallel_map_keeps_order(monkeypatch):
    monkeypatch.setattr(hho_afem, "num_threads", 4)
    items = np.arange(20000.0).reshape(-1, 2)

    result = util.parallel_map(lambda rows: rows.sum(axis=1), items, min_chunk=1000)
    np.testing.assert_array_equal(result, items.sum(axis=1))


def test_resolve_num_threads(monkeypatch):
    monkeypatch.setattr(hho_afem, "num_threads", 3)
    assert util.resolve_num_threads() == 3

    monkeypatch.setattr(hho_afem, "num_threads", None)
    monkeypatch.setattr(hho_afem.config, "num_threads", 2)
    assert util.resolve_num_threads() == 2
