import numpy as np
import pytest

from hho_afem import error
from hho_afem.model.density import (
    DensityParams,
    conjugate_numeric,
    optimal_design,
    plaplace,
    two_well,
    volume_fraction,
)


@pytest.fixture(scope="function")
def sample_gradients():
    rng = np.random.default_rng(7)
    return rng.normal(scale=1.5, size=(200, 2))


@pytest.fixture(scope="function")
def sample_odp():
    xi1 = np.sqrt(2.0 * 0.0084 / 2.0)
    return optimal_design(1.0, 2.0, xi1, 2.0 * xi1)


def _check_derivatives(density, points, h=1e-6, tol=1e-6):
    eye = np.eye(2)
    fd_gradient = np.stack(
        [(density.W(points + h * e) - density.W(points - h * e)) / (2.0 * h) for e in eye],
        axis=-1,
    )
    np.testing.assert_allclose(density.DW(points), fd_gradient, atol=tol * (1.0 + np.abs(fd_gradient).max()))

    fd_hessian = np.stack(
        [(density.DW(points + h * e) - density.DW(points - h * e)) / (2.0 * h) for e in eye],
        axis=-1,
    )
    np.testing.assert_allclose(density.D2W(points), fd_hessian, atol=tol * (1.0 + np.abs(fd_hessian).max()))


def _fenchel_gap(density, points):
    sigma = density.DW(points)
    pairing = np.einsum("ij,ij->i", points, sigma)
    return np.abs(density.W(points) + density.Wstar(sigma) - pairing) / (1.0 + np.abs(pairing))


class TestPLaplace(object):
    @pytest.mark.parametrize("p", [1.5, 2.0, 4.0])
    def test_derivatives(self, sample_gradients, p):
        _check_derivatives(plaplace(p), sample_gradients)

    @pytest.mark.parametrize("p", [1.5, 4.0])
    def test_fenchel_identity(self, sample_gradients, p):
        assert _fenchel_gap(plaplace(p), sample_gradients).max() <= 1e-12

    def test_origin(self):
        density = plaplace(4.0)
        assert density.W(np.zeros(2)) == 0.0
        np.testing.assert_array_equal(density.DW(np.zeros(2)), [0.0, 0.0])
        np.testing.assert_array_equal(density.D2W(np.zeros(2)), np.zeros((2, 2)))

    def test_params(self):
        params = plaplace(4.0).params
        assert (params.p, params.r, params.s) == (4.0, 2.0, 2.0)
        assert params.p_conjugate == pytest.approx(4.0 / 3.0)
        assert params.t == pytest.approx(1.5)

        params = plaplace(1.5).params
        assert params.r == pytest.approx(3.0)
        assert params.s == 0.0

    def test_convexity_control_constant(self):
        assert plaplace(4.0).params.c3 == 4.0
        assert plaplace(2.0).params.c3 == 2.0
        assert plaplace(1.5).params.c3 == pytest.approx(6.0)
        assert plaplace(2.5).params.c3 == pytest.approx(2.5)
        assert plaplace(8.0).params.c3 == pytest.approx(37.0)

    def test_invalid_exponent(self):
        with pytest.raises(error.ValidationError):
            plaplace(1.0)


class TestOptimalDesign(object):
    def test_profile_is_continuous(self, sample_odp):
        for xi in (sample_odp.xi1, sample_odp.xi2):
            below, above = sample_odp.psi([xi - 1e-12, xi + 1e-12])
            assert below == pytest.approx(above, abs=1e-12)
            slopes = sample_odp.psi_prime([xi - 1e-12, xi + 1e-12])
            assert slopes[0] == pytest.approx(slopes[1], abs=1e-11)

    def test_derivatives_away_from_kinks(self, sample_odp, sample_gradients):
        norms = np.linalg.norm(sample_gradients, axis=1)
        keep = (np.abs(norms - sample_odp.xi1) > 1e-3) & (np.abs(norms - sample_odp.xi2) > 1e-3)
        _check_derivatives(sample_odp, sample_gradients[keep])

    def test_fenchel_identity(self, sample_odp, sample_gradients):
        points = np.vstack([sample_gradients, 0.1 * sample_gradients])
        assert _fenchel_gap(sample_odp, points).max() <= 1e-12

    def test_closed_form_conjugate(self, sample_odp, sample_gradients):
        sigma = sample_odp.DW(sample_gradients)
        np.testing.assert_allclose(
            conjugate_numeric(sample_odp, sigma), sample_odp.Wstar(sigma), rtol=1e-10, atol=1e-12
        )

    def test_constraint(self):
        with pytest.raises(error.ValidationError):
            optimal_design(1.0, 2.0, 0.1, 0.3)
        with pytest.raises(error.ValidationError):
            optimal_design(2.0, 1.0, 0.1, 0.05)

    def test_volume_fraction(self, sample_odp):
        xi = np.array([0.0, sample_odp.xi1, 1.5 * sample_odp.xi1, sample_odp.xi2, 1.0])
        np.testing.assert_allclose(volume_fraction(sample_odp, xi), [0.0, 0.0, 0.5, 1.0, 1.0])

        with pytest.raises(error.ValidationError):
            volume_fraction(plaplace(2.0), xi)


class TestTwoWell(object):
    @pytest.fixture(scope="function")
    def sample_two_well(self):
        return two_well([-1.0, 0.0], [1.0, 0.0])

    def test_vanishes_on_segment(self, sample_two_well):
        t = np.linspace(-1.0, 1.0, 11)
        segment = np.column_stack([t, np.zeros_like(t)])
        np.testing.assert_allclose(sample_two_well.W(segment), 0.0, atol=1e-14)
        np.testing.assert_allclose(sample_two_well.DW(segment), 0.0, atol=1e-14)

    def test_matches_nonconvex_energy_outside_ball(self, sample_two_well):
        F = np.array([[3.0, 1.0], [0.5, -2.0], [-2.0, 0.0]])
        expected = (
            np.sum((F - [-1.0, 0.0]) ** 2, axis=1) * np.sum((F - [1.0, 0.0]) ** 2, axis=1)
        )
        np.testing.assert_allclose(sample_two_well.W(F), expected)

    def test_derivatives(self, sample_two_well, sample_gradients):
        X = sample_gradients - sample_two_well.B
        excess = np.einsum("ij,ij->i", X, X) - sample_two_well.A2
        _check_derivatives(sample_two_well, sample_gradients[np.abs(excess) > 1e-3])

    def test_numeric_conjugate(self, sample_two_well, sample_gradients):
        assert _fenchel_gap(sample_two_well, sample_gradients[:50]).max() <= 1e-8

    def test_conjugate_maximizer_solves_first_order_condition(
        self, sample_two_well, sample_gradients
    ):
        g = np.vstack([sample_gradients, [[-3e-7, 5e-7], [0.0, 2.0], [0.0, 0.0]]])
        maximizer = sample_two_well._conjugate_maximizer(g)
        np.testing.assert_allclose(sample_two_well.DW(maximizer), g, atol=1e-10)

    def test_numeric_conjugate_at_small_stress(self, sample_two_well):
        value = conjugate_numeric(sample_two_well, np.array([[-3e-7, 5e-7]]))
        assert value[0] == pytest.approx(3e-7 + (5e-7) ** 2 / 16.0, rel=1e-6)

    def test_numeric_conjugate_at_small_stress_oblique_wells(self):
        direction = np.array([3.0, 2.0]) / np.sqrt(13.0)
        density = two_well(-direction, direction)
        g = np.array([[-2.96e-7, 4.84e-7], [2e-7, -1e-7]])
        along = g @ direction
        across = g @ np.array([-direction[1], direction[0]])
        np.testing.assert_allclose(
            conjugate_numeric(density, g), np.abs(along) + across**2 / 16.0, rtol=1e-6
        )

    def test_invalid_wells(self):
        with pytest.raises(error.ValidationError):
            two_well([1.0, 0.0], [1.0, 0.0])
        with pytest.raises(error.ValidationError):
            two_well([1.0, 0.0, 0.0], [0.0, 1.0, 0.0])


def test_conjugate_numeric_against_closed_form(sample_gradients):
    density = plaplace(3.0)
    np.testing.assert_allclose(
        conjugate_numeric(density, sample_gradients[:40]),
        density.Wstar(sample_gradients[:40]),
        rtol=1e-10,
    )


def test_conjugate_numeric_iteration_cap():
    with pytest.raises(error.ConvergenceError) as info:
        conjugate_numeric(plaplace(4.0), np.array([[1.0, 1.0]]), max_iterations=0)
    assert info.value.best_value.shape == (1,)


def test_density_params_validation():
    with pytest.raises(error.ValidationError):
        DensityParams(p=2.0, r=1.0, s=0.0, c1=1.0, c2=1.0, c3=1.0)
    with pytest.raises(error.ValidationError):
        DensityParams(p=2.0, r=2.0, s=-1.0, c1=1.0, c2=1.0, c3=1.0)
