import numpy as np
import pytest

from hho_afem.fem.bases import (
    REFERENCE_EDGE_LENGTHS,
    REFERENCE_NORMALS,
    cell_basis,
    edge_basis,
    evaluate_cell_polynomial,
    l2_project_cell,
    l2_project_edge,
    l2_project_rt,
    lagrange_basis,
    piola_values,
    reference_edge_points,
    rt_basis,
    side_points,
)
from hho_afem.fem.quadrature import quad_rule_edge, quad_rule_triangle


@pytest.fixture(scope="function")
def sample_reference_points(rng):
    points = rng.random((40, 2))
    # fold into the reference triangle
    outside = points.sum(axis=1) > 1.0
    points[outside] = 1.0 - points[outside]
    return points


class TestCellBasis(object):
    @pytest.mark.parametrize("degree", [0, 1, 2, 4])
    def test_orthonormal(self, degree):
        rule = quad_rule_triangle(2 * degree)
        phi = cell_basis(degree).values(rule.reference_points)
        gram = phi.T @ (rule.weights[:, None] * phi)
        np.testing.assert_allclose(gram, np.eye(phi.shape[1]), atol=1e-12)
        np.testing.assert_allclose(phi[:, 0], 1.0)

    def test_gradients_match_finite_differences(self, sample_reference_points):
        basis = cell_basis(3)
        h = 1e-6
        grads = basis.gradients(sample_reference_points)
        for i, e in enumerate(np.eye(2)):
            fd = (
                basis.values(sample_reference_points + h * e)
                - basis.values(sample_reference_points - h * e)
            ) / (2.0 * h)
            np.testing.assert_allclose(grads[..., i], fd, atol=1e-6)


class TestEdgeBasis(object):
    def test_orthonormal(self):
        rule = quad_rule_edge(8)
        psi = edge_basis(4).values(rule.reference_points[:, 0])
        np.testing.assert_allclose(psi.T @ (rule.weights[:, None] * psi), np.eye(5), atol=1e-13)

    def test_flip_signs(self):
        basis = edge_basis(3)
        s = np.linspace(0.0, 1.0, 7)
        np.testing.assert_allclose(basis.values(1.0 - s), basis.values(s) * basis.flip_signs)


class TestRTBasis(object):
    @pytest.mark.parametrize("degree", [0, 1, 2, 3])
    def test_dimension(self, degree):
        assert rt_basis(degree).dim == (degree + 1) * (degree + 3)

    @pytest.mark.parametrize("degree", [0, 1, 2])
    def test_normal_moments_are_dual(self, degree):
        basis = rt_basis(degree)
        rule = quad_rule_edge(2 * degree + 2)
        s = rule.reference_points[:, 0]
        psi = edge_basis(degree).values(s)

        moments = []
        for j in range(3):
            flux = basis.values(reference_edge_points(j, s)) @ REFERENCE_NORMALS[j]
            moments.append(REFERENCE_EDGE_LENGTHS[j] * psi.T @ (rule.weights[:, None] * flux))
        moments = np.vstack(moments)

        n = 3 * (degree + 1)
        np.testing.assert_allclose(moments, np.eye(basis.dim)[:n], atol=1e-12)

    def test_divergence_matches_finite_differences(self, sample_reference_points):
        basis = rt_basis(2)
        h = 1e-6
        fd = sum(
            (
                basis.values(sample_reference_points + h * e)[..., i]
                - basis.values(sample_reference_points - h * e)[..., i]
            )
            / (2.0 * h)
            for i, e in enumerate(np.eye(2))
        )
        np.testing.assert_allclose(basis.divergence(sample_reference_points), fd, atol=1e-6)


class TestLagrangeBasis(object):
    @pytest.mark.parametrize("degree", [1, 2, 3, 5])
    def test_nodal(self, degree):
        basis = lagrange_basis(degree)
        assert basis.dim == (degree + 1) * (degree + 2) // 2
        np.testing.assert_allclose(basis.values(basis.nodes), np.eye(basis.dim), atol=1e-10)

    def test_partition_of_unity(self, sample_reference_points):
        basis = lagrange_basis(4)
        np.testing.assert_allclose(basis.values(sample_reference_points).sum(axis=1), 1.0)
        np.testing.assert_allclose(
            basis.gradients(sample_reference_points).sum(axis=1), 0.0, atol=1e-9
        )


class TestProjections(object):
    def test_cell_projection_reproduces_polynomials(self, skewed_mesh):
        def f(x, y):
            return 1.0 + x - 2.0 * x * y + 0.5 * y**2

        coefficients = l2_project_cell(skewed_mesh, f, 2)
        points = skewed_mesh.map_to_physical(np.array([[0.2, 0.3], [0.6, 0.1]]))
        values = evaluate_cell_polynomial(
            skewed_mesh, coefficients, 2, np.arange(skewed_mesh.n_cells), points
        )
        np.testing.assert_allclose(values, f(points[..., 0], points[..., 1]), atol=1e-13)

    def test_cell_projection_of_constant(self, lshape):
        coefficients = l2_project_cell(lshape, 3.0, 1)
        np.testing.assert_allclose(coefficients[:, 0], 3.0)
        np.testing.assert_allclose(coefficients[:, 1:], 0.0, atol=1e-14)

    def test_edge_projection_reproduces_polynomials(self, skewed_mesh):
        def f(x, y):
            return x - 3.0 * y

        coefficients = l2_project_edge(skewed_mesh, f, 1)
        s = np.array([0.0, 0.4, 1.0])
        points = side_points(skewed_mesh, s)
        values = coefficients @ edge_basis(1).values(s).T
        np.testing.assert_allclose(values, f(points[..., 0], points[..., 1]))

    def test_rt_projection_reproduces_rt_fields(self, skewed_mesh):
        def field(x, y):
            return np.stack([1.0 + 0.5 * x, -2.0 + 0.5 * y], axis=-1)

        coefficients = l2_project_rt(skewed_mesh, field, 0)
        reference = np.array([[0.1, 0.2], [0.5, 0.4], [0.3, 0.3]])
        tau = rt_basis(0).values(reference)
        values = piola_values(skewed_mesh, np.einsum("cr,qri->cqi", coefficients, tau))
        x = skewed_mesh.map_to_physical(reference)
        np.testing.assert_allclose(values, field(x[..., 0], x[..., 1]), atol=1e-12)
