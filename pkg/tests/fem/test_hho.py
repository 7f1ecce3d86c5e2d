import numpy as np
import pytest

from hho_afem import error
from hho_afem.fem.bases import l2_project_rt, piola_values, reference_edge_points
from hho_afem.fem.hho import (
    EnergyFunctional,
    FidelityTerm,
    GradientField,
    HHOFunction,
    HHOSpace,
    discrete_energy,
    discrete_norm,
    energy_gradient,
    interpolate,
    reconstruct_gradient,
)


def _cubic(x, y):
    return x**3 - 2.0 * x * y**2 + y - 0.5


def _cubic_gradient(x, y):
    return np.stack([3.0 * x**2 - 2.0 * y**2, -4.0 * x * y + 1.0], axis=-1)


class TestHHOSpace(object):
    def test_dof_counts(self, square):
        space = HHOSpace(square, k=1)
        assert space.ndof == 4 * 3 + 4 * 2
        assert space.n_full == 4 * 3 + 8 * 2
        assert space.n_rt == 8
        assert not space.free[space.side_dofs[square.boundary_sides]].any()

    def test_quadrature_degree_floor(self, square):
        assert HHOSpace(square, k=2).quadrature_degree == 6
        assert HHOSpace(square, k=2, quadrature_degree=9).quadrature_degree == 9

    def test_dirichlet_boundary_values(self, square):
        space = HHOSpace(square, k=0, dirichlet=lambda x, y: x + y)
        boundary = square.boundary_sides
        midpoints = square.vertices[square.sides[boundary]].mean(axis=1)
        np.testing.assert_allclose(
            space.boundary_values[space.side_dofs[boundary, 0]], midpoints.sum(axis=1)
        )

    def test_invalid_degree(self, square):
        with pytest.raises(error.ValidationError):
            HHOSpace(square, k=5)


class TestReconstruction(object):
    def test_constants_have_zero_gradient(self, lshape):
        space = HHOSpace(lshape, k=2)
        gradient = reconstruct_gradient(space, interpolate(space, 4.0))
        np.testing.assert_allclose(gradient.coefficients, 0.0, atol=1e-12)

    def test_affine_functions(self, skewed_mesh):
        space = HHOSpace(skewed_mesh, k=0)
        gradient = reconstruct_gradient(space, interpolate(space, lambda x, y: 2.0 * x - y + 1.0))
        values = gradient.values()
        np.testing.assert_allclose(values[..., 0], 2.0, atol=1e-12)
        np.testing.assert_allclose(values[..., 1], -1.0, atol=1e-12)
        np.testing.assert_allclose(gradient.divergence(), 0.0, atol=1e-12)

    @pytest.mark.parametrize("k", [0, 1, 2])
    def test_commutes_with_interpolation(self, fine_square, k):
        space = HHOSpace(fine_square, k=k)
        reconstructed = reconstruct_gradient(space, interpolate(space, _cubic))
        projected = l2_project_rt(fine_square, _cubic_gradient, k)

        diff = reconstructed.coefficients - projected
        error_norm = np.sqrt(np.einsum("ci,cij,cj->", diff, space.mass, diff))
        norm = np.sqrt(np.einsum("ci,cij,cj->", projected, space.mass, projected))
        assert error_norm <= 1e-10 * norm

    def test_edge_values_match_cell_values(self, skewed_mesh):
        space = HHOSpace(skewed_mesh, k=1)
        gradient = reconstruct_gradient(space, interpolate(space, _cubic))
        for j in range(3):
            points = reference_edge_points(j, space.edge_s)
            reference = np.einsum(
                "cr,qri->cqi", gradient.coefficients, space.rt_basis.values(points)
            )
            np.testing.assert_allclose(
                gradient.edge_values(j), piola_values(skewed_mesh, reference), atol=1e-13
            )

    def test_rejects_foreign_function(self, square):
        space = HHOSpace(square, k=0)
        other = HHOSpace(square, k=0)
        with pytest.raises(error.ValidationError):
            reconstruct_gradient(space, HHOFunction(other))

    def test_gradient_field_shape(self, square):
        space = HHOSpace(square, k=1)
        with pytest.raises(error.ValidationError):
            GradientField(space, np.zeros((4, 3)))


class TestHHOFunction(object):
    def test_default_values_carry_boundary_data(self, square):
        space = HHOSpace(square, k=0, dirichlet=1.0)
        v_h = HHOFunction(space)
        np.testing.assert_allclose(v_h.side_values[square.boundary_sides], 1.0)
        np.testing.assert_allclose(v_h.free_values, 0.0)
        assert len(v_h) == space.ndof

    def test_from_free(self, square):
        space = HHOSpace(square, k=1)
        free = np.arange(space.ndof, dtype=float)
        np.testing.assert_array_equal(HHOFunction.from_free(space, free).free_values, free)

    def test_wrong_shape(self, square):
        space = HHOSpace(square, k=0)
        with pytest.raises(error.ValidationError):
            HHOFunction(space, np.zeros(space.n_full + 1))


def test_discrete_norm(fine_square):
    space = HHOSpace(fine_square, k=1)
    assert discrete_norm(space, interpolate(space, 2.0)) == pytest.approx(0.0, abs=1e-12)

    # for an affine function only the cell gradients contribute
    v_h = interpolate(space, lambda x, y: 3.0 * x + 4.0 * y)
    assert discrete_norm(space, v_h) == pytest.approx(5.0)
    assert discrete_norm(space, v_h, p=4.0) == pytest.approx(5.0)


class TestEnergyFunctional(object):
    @pytest.fixture(scope="function")
    def sample_state(self, fine_square, rng):
        space = HHOSpace(fine_square, k=1, quadrature_degree=8)
        values = space.boundary_values.copy()
        values[space.free_index] = rng.normal(scale=0.3, size=space.ndof)
        direction = rng.normal(size=space.ndof)
        return space, values, direction

    def _directional(self, functional, values, direction, h=1e-6):
        free = functional.space.free_index
        plus, minus = values.copy(), values.copy()
        plus[free] += h * direction
        minus[free] -= h * direction
        return plus, minus

    @pytest.mark.parametrize("with_fidelity", [False, True])
    def test_gradient_matches_finite_differences(
        self, sample_state, quartic_density, with_fidelity
    ):
        space, values, direction = sample_state
        fidelity = FidelityTerm(lambda x, y: x * y, alpha=0.5) if with_fidelity else None
        functional = EnergyFunctional(space, quartic_density, 1.0, fidelity=fidelity)

        h = 1e-6
        plus, minus = self._directional(functional, values, direction, h)
        fd = (functional.energy(plus) - functional.energy(minus)) / (2.0 * h)
        assert functional.gradient(values) @ direction == pytest.approx(fd, rel=1e-6, abs=1e-9)

    @pytest.mark.parametrize("with_fidelity", [False, True])
    def test_hessian_matches_finite_differences(
        self, sample_state, quartic_density, with_fidelity
    ):
        space, values, direction = sample_state
        fidelity = FidelityTerm(0.0, alpha=2.0) if with_fidelity else None
        functional = EnergyFunctional(space, quartic_density, 1.0, fidelity=fidelity)

        h = 1e-6
        plus, minus = self._directional(functional, values, direction, h)
        fd = (functional.gradient(plus) - functional.gradient(minus)) / (2.0 * h)
        hv = functional.hessian(values) @ direction
        np.testing.assert_allclose(hv, fd, rtol=1e-5, atol=1e-7 * np.abs(fd).max())

    def test_hessian_is_symmetric(self, sample_state, quartic_density):
        space, values, _ = sample_state
        hessian = EnergyFunctional(space, quartic_density, 0.0).hessian(values)
        assert abs(hessian - hessian.T).max() <= 1e-12 * abs(hessian).max()

    def test_energy_of_interpolated_affine_function(self, square, quadratic_density):
        space = HHOSpace(square, k=0)
        v_h = interpolate(space, lambda x, y: x)
        # ∫ |∇v|²/2 − ∫ f v_T with f = 1 and ∫ x = 1/2
        assert discrete_energy(space, quadratic_density, 1.0, v_h) == pytest.approx(0.0)
        assert discrete_energy(space, quadratic_density, 0.0, v_h) == pytest.approx(0.5)

    def test_energy_gradient_wrapper(self, sample_state, quartic_density):
        space, values, _ = sample_state
        v_h = HHOFunction(space, values)
        np.testing.assert_allclose(
            energy_gradient(space, quartic_density, 1.0, v_h),
            EnergyFunctional(space, quartic_density, 1.0).gradient(values),
        )
