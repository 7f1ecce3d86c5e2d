import numpy as np
import pytest

from hho_afem import error
from hho_afem.afem.verify import (
    SuiteResult,
    aitken_geometric,
    commutativity,
    density_properties,
    dorfler_brute_force,
    minimal_bulk_size,
    run_suites,
    verification_densities,
)
from hho_afem.model.density import optimal_design, plaplace


class _BrokenDensity(object):
    """p-Laplace with a derivative off by a factor two."""

    def __init__(self):
        self._inner = plaplace(4.0)
        self.params = self._inner.params
        self.label = "broken"

    def W(self, a):
        return self._inner.W(a)

    def DW(self, a):
        return 2.0 * self._inner.DW(a)

    def Wstar(self, g):
        return self._inner.Wstar(g)


class TestCommutativity(object):
    def test_low_degrees(self, rng):
        result = commutativity(rng, degrees=(0, 1), levels=1, samples=2)
        assert result.passed
        assert result.name == "commutativity"
        assert result.detail["max_relative_error"] <= 1e-11


class TestDensityProperties(object):
    def test_plaplace(self, rng):
        result = density_properties(rng, plaplace(4.0), samples=500)
        assert result.passed
        assert result.name == "density:plaplace(p=4)"
        assert result.detail["growth"]
        assert result.detail["convexity_control"]

    @pytest.mark.parametrize("p", [1.5, 3.0])
    def test_plaplace_exponents(self, rng, p):
        assert density_properties(rng, plaplace(p), samples=500).passed

    def test_optimal_design(self, rng):
        xi1 = np.sqrt(0.0084)
        result = density_properties(
            rng, optimal_design(1.0, 2.0, xi1, 2.0 * xi1), samples=500, name="odp"
        )
        assert result.passed
        assert result.name == "density:odp"

    def test_wrong_derivative_fails(self, rng):
        result = density_properties(rng, _BrokenDensity(), samples=200)
        assert not result.passed
        assert result.detail["finite_difference_error"] > 1e-6

    def test_verification_densities(self):
        assert set(verification_densities()) == {"plaplace-4", "optimal-design", "two-well"}


class TestDorflerSuite(object):
    def test_minimal_bulk_size(self):
        eta = np.array([1.0, 4.0, 1.0, 4.0])
        assert minimal_bulk_size(eta, 0.5) == 2
        assert minimal_bulk_size(eta, 0.9) == 3
        assert minimal_bulk_size(np.zeros(3), 0.5) == 0

    def test_brute_force(self, rng):
        result = dorfler_brute_force(rng, trials=30)
        assert result.passed
        assert result.detail == {"trials": 30, "mismatches": 0}


class TestAitkenSuite(object):
    def test_geometric(self, rng):
        result = aitken_geometric(rng)
        assert result.passed
        assert result.detail["error"] <= 1e-9


class TestSuiteResult(object):
    def test_required_fields(self):
        with pytest.raises(error.ValidationError):
            SuiteResult(name="missing-passed")

    def test_detail_defaults_to_none(self):
        result = SuiteResult(name="x", passed=True)
        assert result.detail is None


@pytest.mark.slow
class TestRunSuites(object):
    def test_quick(self):
        results = run_suites(seed=3, quick=True)
        names = [result.name for result in results]

        assert names[0] == "commutativity"
        assert names[-2:] == ["dorfler", "aitken"]
        assert all(result.passed for result in results)
